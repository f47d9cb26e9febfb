"""Command-line entry point: ``systemp {spec,template,lint,generate,eval}``.

Exit codes: 0 success, 1 domain failure (lint errors, no convergence,
failed ablation cells), 2 usage or input errors, 3 backend errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from . import spec as spec_model
from .agents import (
    AgentError,
    PipelineConfig,
    SpecificationExtractionFailed,
    WriterFailed,
    load_examples,
    run_pipeline,
    run_specification_agent,
)
from .harness import (
    ARMS,
    SENTINEL,
    EmptyCorpus,
    MalformedScenario,
    bundled_scenarios_path,
    bundled_script_path,
    load_scenarios,
    report_csv,
    report_json,
    run_ablation,
)
from .llm import BackendConfig, BackendError, RecordingBackend, make_backend
from .prompts import load_catalog
from .spec import NaturalLanguageRequest
from .sysml import check
from .template import RenderOptions, TemplateError, llm_adapt_then_render, render_skeleton

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_BACKEND = 3

log = logging.getLogger("systemp")


class UsageError(Exception):
    pass


def _add_backend_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("backend")
    g.add_argument("--provider", help="openai-compatible, anthropic-compatible, scripted or replay "
                                      "(default: $SYSTEMP_PROVIDER or scripted)")
    g.add_argument("--model", help="model id (default: $SYSTEMP_MODEL)")
    g.add_argument("--base-url", help="API base URL (default: $SYSTEMP_BASE_URL)")
    g.add_argument("--api-key-env", help="environment variable holding the API key")
    g.add_argument("--script", help="script file for the scripted provider "
                                    "(default: the bundled ablation script)")
    g.add_argument("--cassette", help="cassette file for the replay provider")
    g.add_argument("--record", help="record every exchange to this cassette file")
    g.add_argument("--timeout", type=float)
    g.add_argument("--max-retries", type=int)
    g.add_argument("--prompts-dir", help="directory overriding the bundled prompt files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="systemp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spec", help="extract a structured specification from a request")
    p.add_argument("input", help="natural-language text file or scenario .json")
    p.add_argument("--out", help="write the specification here instead of stdout")
    _add_backend_options(p)

    p = sub.add_parser("template", help="render a SysML skeleton from a specification")
    p.add_argument("spec", help="specification .json")
    p.add_argument("--out", help="write the skeleton here instead of stdout")
    p.add_argument("--package-doc", action="store_true", help="emit the package doc line")
    p.add_argument("--llm", action="store_true", help="let the template-generator LLM restate the specification first")
    _add_backend_options(p)

    p = sub.add_parser("lint", help="check SysML files; exit 1 on any error")
    p.add_argument("files", nargs="+")

    p = sub.add_parser("generate", help="run the full pipeline on one request")
    p.add_argument("input", help="natural-language text file or scenario .json")
    p.add_argument("--spec", help="use this specification instead of running extraction")
    p.add_argument("--no-template", action="store_true", help="skip the skeleton stage")
    p.add_argument("--llm-template", action="store_true",
                   help="route the skeleton through the template-generator LLM call")
    p.add_argument("--max-iter", type=int, default=5)
    p.add_argument("--out", help="final model file (default: stdout)")
    p.add_argument("--trace", help="trace JSON sidecar (default: <out>.trace.json)")
    _add_backend_options(p)

    p = sub.add_parser("eval", help="run the with/without-template ablation")
    p.add_argument("--scenarios", help="scenario directory or .json array (default: bundled corpus)")
    p.add_argument("--arm", choices=("both", "with", "without"), default="both")
    p.add_argument("--out", help="report file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--max-iter", type=int, default=5)
    p.add_argument("--jobs", type=int, default=1)
    _add_backend_options(p)
    return parser


def _backend(args):
    config = BackendConfig.from_env(
        provider=args.provider,
        model_id=args.model,
        base_url=args.base_url,
        api_key_env=args.api_key_env,
        timeout=args.timeout,
        max_retries=args.max_retries,
        script_path=args.script,
        cassette_path=args.cassette,
    )
    if config.provider == "scripted" and not config.script_path:
        config = replace(config, script_path=str(bundled_script_path()))
    backend = make_backend(config)
    if args.record:
        backend = RecordingBackend(backend, args.record)
    return backend, config


def _read_request(path: str) -> NaturalLanguageRequest:
    file = Path(path)
    try:
        text = file.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    if file.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError:
            data = None
        if isinstance(data, dict) and isinstance(data.get("content"), str):
            text = data["content"]
    if not text.strip():
        raise UsageError(f"{path} is empty")
    return NaturalLanguageRequest(file.stem, text)


def _read_spec(path: str):
    try:
        return spec_model.from_json(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    except spec_model.SpecError as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _write(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_spec(args) -> int:
    request = _read_request(args.input)
    backend, config = _backend(args)
    pipeline = PipelineConfig(model_id=config.model_id)
    try:
        run = run_specification_agent(backend, request, load_examples()[: pipeline.k_examples],
                                      config=pipeline, catalog=load_catalog(args.prompts_dir))
    except SpecificationExtractionFailed as exc:
        print(f"systemp: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for warning in run.warnings:
        print(f"systemp: warning: {warning}", file=sys.stderr)
    _write(spec_model.to_json(run.specification) + "\n", args.out)
    return EXIT_OK


def cmd_template(args) -> int:
    spec = _read_spec(args.spec)
    options = RenderOptions(include_package_doc=args.package_doc)
    try:
        if args.llm:
            backend, config = _backend(args)
            skeleton = llm_adapt_then_render(backend, spec, options, model_id=config.model_id,
                                             catalog=load_catalog(args.prompts_dir))
            if skeleton.fallback_reason:
                print(f"systemp: warning: rendered directly ({skeleton.fallback_reason})", file=sys.stderr)
        else:
            skeleton = render_skeleton(spec, options)
    except (spec_model.Unrepresentable, TemplateError) as exc:
        raise UsageError(str(exc)) from exc
    _write(skeleton.text, args.out)
    return EXIT_OK


def cmd_lint(args) -> int:
    failed = False
    for name in args.files:
        try:
            text = Path(name).read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise UsageError(f"cannot read {name}: {exc}") from exc
        report = check(text)
        for d in report.diagnostics:
            print(f"{name}:{d.line}:{d.column}: {d.severity}: {d.message}", file=sys.stderr)
        failed = failed or not report.ok
    return EXIT_FAILURE if failed else EXIT_OK


def cmd_generate(args) -> int:
    request = _read_request(args.input)
    specification = _read_spec(args.spec) if args.spec else None
    backend, config = _backend(args)
    try:
        pipeline = PipelineConfig(use_template=not args.no_template, max_iterations=args.max_iter,
                                  model_id=config.model_id, llm_template=args.llm_template)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    try:
        result = run_pipeline(backend, request, pipeline, specification=specification,
                              catalog=load_catalog(args.prompts_dir))
    except SpecificationExtractionFailed as exc:
        print(f"systemp: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (WriterFailed, AgentError) as exc:
        print(f"systemp: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    _write(result.final_model_text.rstrip("\n") + "\n", args.out)
    trace = args.trace or (f"{args.out}.trace.json" if args.out else None)
    if trace:
        Path(trace).write_text(json.dumps(result.to_dict(), indent=2, ensure_ascii=False) + "\n",
                               encoding="utf-8")
    counts = ", ".join(map(str, result.error_counts))
    print(f"systemp: {result.arm}: errors per iteration [{counts}]", file=sys.stderr)
    return EXIT_OK if result.converged else EXIT_FAILURE


def cmd_eval(args) -> int:
    path = Path(args.scenarios) if args.scenarios else bundled_scenarios_path()
    if not path.exists():
        raise UsageError(f"scenarios not found: {path}")
    try:
        scenarios = load_scenarios(path)
    except (EmptyCorpus, MalformedScenario) as exc:
        raise UsageError(str(exc)) from exc
    arms = {"both": ARMS, "with": ARMS[:1], "without": ARMS[1:]}[args.arm]
    backend, config = _backend(args)
    try:
        pipeline = PipelineConfig(max_iterations=args.max_iter, model_id=config.model_id)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    report = run_ablation(backend, scenarios, pipeline, arms=arms,
                          catalog=load_catalog(args.prompts_dir), jobs=args.jobs)
    _write(report_csv(report) if args.format == "csv" else report_json(report), args.out)
    for arm, stats in report.summary["arms"].items():
        print(f"systemp: {arm}: {stats['converged']}/{stats['scenarios']} converged", file=sys.stderr)
    return EXIT_FAILURE if any(r.error_count == SENTINEL for r in report.rows) else EXIT_OK


COMMANDS = {
    "spec": cmd_spec,
    "template": cmd_template,
    "lint": cmd_lint,
    "generate": cmd_generate,
    "eval": cmd_eval,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"systemp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BackendError as exc:
        print(f"systemp: backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except ValueError as exc:
        # configuration problems (unknown provider, missing base URL, ...)
        print(f"systemp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
