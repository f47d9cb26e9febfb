"""The four agents and the writer/parser repair loop.

A run goes: natural-language request -> specification agent -> (optional)
skeleton -> writer -> parser agent -> writer -> ... until the parser finds
no error or the iteration budget runs out.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence

from . import spec as spec_model
from .llm import Backend, ChatRequest, extract_fenced
from .prompts import PromptCatalog, load_catalog
from .spec import FewShotExample, NaturalLanguageRequest, StructuredSpecification
from .sysml import Diagnostic, ParseReport, parse
from .template import RenderOptions, SkeletonText, llm_adapt_then_render, render_skeleton

log = logging.getLogger(__name__)

NO_ERROR_REPLY = "the SysML V2 code contains no error"
ERROR_HEADER = "Your code contains error:"
WITH_TEMPLATE = "with_template"
WITHOUT_TEMPLATE = "without_template"


class AgentError(RuntimeError):
    pass


class SpecificationExtractionFailed(AgentError):
    pass


class EmptyCompletion(AgentError):
    pass


class WriterFailed(AgentError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    use_template: bool = True
    max_iterations: int = 5
    k_examples: int = 3
    model_id: str = ""
    temperature: float = 0.0
    max_output_tokens: int = 4096
    spec_retries: int = 2
    render_options: Optional[RenderOptions] = None
    # route the skeleton through the template-generator LLM call first
    llm_template: bool = False

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.k_examples < 0:
            raise ValueError("k_examples must be non-negative")

    @property
    def arm(self) -> str:
        return WITH_TEMPLATE if self.use_template else WITHOUT_TEMPLATE


@dataclass(frozen=True)
class IterationTrace:
    iteration: int
    model_text: str
    error_count: int
    diagnostics: tuple[Diagnostic, ...]
    parser_reply: str
    # the writer produced nothing usable; the previous model was carried over
    failed: bool = False

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "error_count": self.error_count,
            "failed": self.failed,
            "parser_reply": self.parser_reply,
            "diagnostics": [d.to_dict() for d in self.diagnostics],
            "model_text": self.model_text,
        }


@dataclass(frozen=True)
class SpecificationRun:
    specification: StructuredSpecification
    retry_count: int
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class PipelineResult:
    scenario_id: str
    arm: str
    specification: StructuredSpecification
    skeleton: Optional[SkeletonText]
    traces: tuple[IterationTrace, ...]
    spec_retry_count: int = 0

    @property
    def converged(self) -> bool:
        return bool(self.traces) and self.traces[-1].error_count == 0

    @property
    def final_model_text(self) -> str:
        return self.traces[-1].model_text if self.traces else ""

    @property
    def error_counts(self) -> list[int]:
        return [t.error_count for t in self.traces]

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "arm": self.arm,
            "converged": self.converged,
            "error_counts": self.error_counts,
            "spec_retry_count": self.spec_retry_count,
            "specification": self.specification.to_dict(),
            "skeleton": self.skeleton.text if self.skeleton else None,
            "skeleton_fallback": self.skeleton.fallback_reason if self.skeleton else None,
            "traces": [t.to_dict() for t in self.traces],
        }


def load_examples() -> list[FewShotExample]:
    raw = json.loads(
        resources.files("systemp.data").joinpath("few_shot_examples.json").read_text(encoding="utf-8")
    )
    return [
        FewShotExample(
            NaturalLanguageRequest(f"example_{i}", item["request"]),
            spec_model.from_dict(item["specification"]),
        )
        for i, item in enumerate(raw, 1)
    ]


def format_examples(examples: Sequence[FewShotExample]) -> str:
    return "\n".join(
        f"###{{{ex.request.content} : {spec_model.to_json(ex.specification)}}} ###" for ex in examples
    )


def run_specification_agent(
    backend: Backend,
    request: NaturalLanguageRequest,
    examples: Sequence[FewShotExample],
    *,
    config: Optional[PipelineConfig] = None,
    catalog: Optional[PromptCatalog] = None,
) -> SpecificationRun:
    config = config or PipelineConfig()
    catalog = catalog or load_catalog()
    if len(examples) != config.k_examples:
        raise ValueError(f"expected {config.k_examples} few-shot examples, got {len(examples)}")
    system = catalog.p_rga
    if examples:
        system += "\n\n" + format_examples(examples)
    turns: list[tuple[str, str]] = [("user", request.content)]
    meta = {"agent": "specification", "scenario": request.scenario_id}
    last_error = None
    for attempt in range(config.spec_retries + 1):
        response = backend.complete(
            ChatRequest(system, tuple(turns), config.model_id, config.temperature,
                        config.max_output_tokens, meta)
        )
        warnings: list[str] = []
        try:
            spec = spec_model.from_reply(extract_fenced(response.content).text, warnings)
        except spec_model.SpecError as exc:
            last_error = exc
            log.info("specification reply rejected (attempt %d): %s", attempt + 1, exc)
            turns += [
                ("assistant", response.content),
                ("user", f"Your answer could not be read as a specification: {exc}. "
                         "Reply with the dictionary only, in the format given."),
            ]
            continue
        return SpecificationRun(spec, attempt, tuple(warnings))
    raise SpecificationExtractionFailed(
        f"no usable specification after {config.spec_retries + 1} attempts: {last_error}"
    )


def writer_content(
    spec: StructuredSpecification, skeleton: Optional[str], parser_reply: str
) -> str:
    sections = ["Requirements:\n" + spec_model.to_json(spec)]
    if skeleton is not None:
        sections.append("Template:\n" + skeleton.rstrip("\n"))
    if parser_reply:
        sections.append("Parser reply:\n" + parser_reply)
    return "\n\n".join(sections)


def run_writer(
    backend: Backend,
    spec: StructuredSpecification,
    skeleton: Optional[str],
    parser_reply: str = "",
    *,
    history: Sequence[tuple[str, str]] = (),
    config: Optional[PipelineConfig] = None,
    catalog: Optional[PromptCatalog] = None,
    scenario_id: str = "",
) -> str:
    """One writer call; returns the fenced SysML payload of the reply.

    The first call carries the specification, the skeleton (template arm
    only) and any parser reply. Later calls continue ``history`` with the
    parser reply alone.
    """
    config = config or PipelineConfig(use_template=skeleton is not None)
    catalog = catalog or load_catalog()
    if history:
        content = "Parser reply:\n" + parser_reply
    else:
        content = writer_content(spec, skeleton, parser_reply)
    request = ChatRequest(
        catalog.writer_prompt(skeleton is not None),
        tuple(history) + (("user", content),),
        config.model_id,
        config.temperature,
        config.max_output_tokens,
        {"agent": "writer", "scenario": scenario_id,
         "arm": WITH_TEMPLATE if skeleton is not None else WITHOUT_TEMPLATE},
    )
    text = extract_fenced(backend.complete(request).content).text
    if not text:
        raise EmptyCompletion("writer returned no code")
    return text


def format_parser_reply(report: ParseReport) -> str:
    if report.error_count == 0:
        return NO_ERROR_REPLY
    lines = [ERROR_HEADER]
    lines += [
        f"Error: {d.message} (line {d.line}, column {d.column})"
        for d in report.diagnostics
        if d.severity == "error"
    ]
    return "\n".join(lines)


def run_parser_agent(model_text: str) -> tuple[str, ParseReport]:
    report = parse(model_text)
    return format_parser_reply(report), report


def build_skeleton(
    backend: Backend,
    spec: StructuredSpecification,
    config: PipelineConfig,
    catalog: PromptCatalog,
    scenario_id: str = "",
) -> SkeletonText:
    if config.llm_template:
        return llm_adapt_then_render(
            backend, spec, config.render_options, catalog=catalog, model_id=config.model_id,
            temperature=config.temperature, meta={"scenario": scenario_id, "arm": WITH_TEMPLATE},
        )
    return render_skeleton(spec, config.render_options)


def run_pipeline(
    backend: Backend,
    request: NaturalLanguageRequest,
    config: Optional[PipelineConfig] = None,
    *,
    examples: Optional[Sequence[FewShotExample]] = None,
    specification: Optional[StructuredSpecification] = None,
    catalog: Optional[PromptCatalog] = None,
) -> PipelineResult:
    """Generate a SysML model for ``request``.

    Pass ``specification`` to skip the extraction stage (the ablation
    harness shares one extraction between both arms).
    """
    config = config or PipelineConfig()
    catalog = catalog or load_catalog()
    retries = 0
    if specification is None:
        if examples is None:
            examples = load_examples()[: config.k_examples]
        run = run_specification_agent(backend, request, examples, config=config, catalog=catalog)
        specification, retries = run.specification, run.retry_count

    skeleton = None
    if config.use_template:
        skeleton = build_skeleton(backend, specification, config, catalog, request.scenario_id)

    traces: list[IterationTrace] = []
    history: list[tuple[str, str]] = []
    reply = ""
    for iteration in range(1, config.max_iterations + 1):
        try:
            text = run_writer(
                backend, specification, skeleton.text if skeleton else None, reply,
                history=history, config=config, catalog=catalog, scenario_id=request.scenario_id,
            )
        except EmptyCompletion as exc:
            if not traces:
                raise WriterFailed(f"writer produced no code on the first iteration: {exc}") from exc
            prev = traces[-1]
            traces.append(IterationTrace(iteration, prev.model_text, prev.error_count,
                                         prev.diagnostics, prev.parser_reply, failed=True))
            continue
        if not history:
            history.append(("user", writer_content(specification, skeleton.text if skeleton else None, reply)))
        else:
            history.append(("user", "Parser reply:\n" + reply))
        history.append(("assistant", f"'''\n{text}\n'''"))
        reply, report = run_parser_agent(text)
        traces.append(IterationTrace(iteration, text, report.error_count, report.diagnostics, reply))
        log.debug("%s/%s iteration %d: %d errors", request.scenario_id, config.arm,
                  iteration, report.error_count)
        if report.ok:
            break

    return PipelineResult(request.scenario_id, config.arm, specification, skeleton,
                          tuple(traces), retries)
