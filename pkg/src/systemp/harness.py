"""With/without-template ablation over a scenario corpus.

Each scenario's specification is extracted once and shared by both arms,
so the only difference between a scenario's two cells is the skeleton.
A cell that fails is recorded as a single row with ``error_count = -1``
and never stops the run.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from statistics import fmean
from typing import Optional, Sequence, Union

from .agents import (
    WITH_TEMPLATE,
    WITHOUT_TEMPLATE,
    AgentError,
    PipelineConfig,
    load_examples,
    run_pipeline,
    run_specification_agent,
)
from .llm import Backend, BackendError
from .prompts import PromptCatalog, load_catalog
from .spec import FewShotExample, NaturalLanguageRequest

log = logging.getLogger(__name__)

ARMS = (WITH_TEMPLATE, WITHOUT_TEMPLATE)
SENTINEL = -1
CSV_COLUMNS = ("scenario_id", "arm", "iteration", "error_count")


class MalformedScenario(ValueError):
    pass


class EmptyCorpus(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    id: str
    content: str

    def __post_init__(self) -> None:
        if not self.content.strip():
            raise MalformedScenario(f"scenario {self.id!r} has empty content")

    def to_request(self) -> NaturalLanguageRequest:
        return NaturalLanguageRequest(self.id, self.content)


@dataclass(frozen=True)
class AblationRow:
    scenario_id: str
    arm: str
    iteration: int
    error_count: int


@dataclass
class AblationReport:
    rows: list[AblationRow]
    summary: dict
    failures: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "rows": [
                {"scenario_id": r.scenario_id, "arm": r.arm, "iteration": r.iteration,
                 "error_count": r.error_count}
                for r in self.rows
            ],
            "summary": self.summary,
            "failures": self.failures,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AblationReport":
        return cls([AblationRow(**row) for row in data["rows"]], data["summary"],
                   list(data.get("failures", [])))


def bundled_scenarios_path() -> Path:
    return Path(str(resources.files("systemp.data").joinpath("scenarios")))


def bundled_script_path() -> Path:
    return Path(str(resources.files("systemp.data").joinpath("ablation_script.json")))


def _entries(data, stem: str):
    if isinstance(data, dict):
        yield data.get("id", stem), data
    elif isinstance(data, list):
        for i, item in enumerate(data, 1):
            if not isinstance(item, dict):
                raise MalformedScenario(f"{stem}: entry {i} is not an object")
            yield item.get("id", f"{stem}_{i}"), item
    else:
        raise MalformedScenario(f"{stem}: expected an object or an array")


def load_scenarios(path: Union[str, Path]) -> list[Scenario]:
    """Load ``"type": "input"`` entries from a directory of .json files or one array file."""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.json"))
    elif path.is_file():
        files = [path]
    else:
        raise FileNotFoundError(f"no scenarios at {path}")
    scenarios = []
    for file in files:
        try:
            data = json.loads(file.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise MalformedScenario(f"{file.name}: {exc}") from exc
        for scenario_id, entry in _entries(data, file.stem):
            if entry.get("type") != "input":
                continue
            content = entry.get("content")
            if not isinstance(content, str):
                raise MalformedScenario(f"{file.name}: entry {scenario_id!r} has no content")
            scenarios.append(Scenario(str(scenario_id), content))
    if not scenarios:
        raise EmptyCorpus(f"no input scenarios found in {path}")
    return sorted(scenarios, key=lambda s: s.id)


def summarize(rows: Sequence[AblationRow], model_id: str = "", arms: Sequence[str] = ARMS) -> dict:
    """Per-arm convergence fraction and mean error count, recomputable from rows."""
    cells: dict[tuple[str, str], list[AblationRow]] = {}
    for row in rows:
        cells.setdefault((row.arm, row.scenario_id), []).append(row)
    result = {"model_id": model_id, "arms": {}}
    for arm in arms:
        arm_cells = {sid: rs for (a, sid), rs in cells.items() if a == arm}
        if not arm_cells:
            continue
        counts = [r.error_count for rs in arm_cells.values() for r in rs if r.error_count != SENTINEL]
        converged = sum(1 for rs in arm_cells.values() if rs[-1].error_count == 0)
        failed = sorted(sid for sid, rs in arm_cells.items() if rs[-1].error_count == SENTINEL)
        result["arms"][arm] = {
            "scenarios": len(arm_cells),
            "converged": converged,
            "convergence_fraction": converged / len(arm_cells),
            "failed_cells": failed,
            "mean_error_count": fmean(counts) if counts else None,
        }
    return result


def _cell_order(arm: str) -> int:
    return ARMS.index(arm) if arm in ARMS else len(ARMS)


def run_ablation(
    backend: Backend,
    scenarios: Sequence[Scenario],
    config: Optional[PipelineConfig] = None,
    *,
    arms: Sequence[str] = ARMS,
    examples: Optional[Sequence[FewShotExample]] = None,
    catalog: Optional[PromptCatalog] = None,
    jobs: int = 1,
) -> AblationReport:
    if not scenarios:
        raise EmptyCorpus("no scenarios to run")
    config = config or PipelineConfig()
    catalog = catalog or load_catalog()
    if examples is None:
        examples = load_examples()[: config.k_examples]

    def extract(scenario: Scenario):
        try:
            return run_specification_agent(
                backend, scenario.to_request(), examples, config=config, catalog=catalog
            ).specification, None
        except (AgentError, BackendError) as exc:
            return None, f"{type(exc).__name__}: {exc}"

    def cell(scenario: Scenario, arm: str, specification, spec_error):
        if specification is None:
            return scenario.id, arm, None, f"specification stage failed: {spec_error}"
        arm_config = replace(config, use_template=(arm == WITH_TEMPLATE))
        try:
            result = run_pipeline(backend, scenario.to_request(), arm_config,
                                  specification=specification, catalog=catalog)
        except (AgentError, BackendError, ValueError) as exc:
            return scenario.id, arm, None, f"{type(exc).__name__}: {exc}"
        return scenario.id, arm, result, None

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        specs = list(pool.map(extract, scenarios))
        futures = [
            pool.submit(cell, scenario, arm, *spec)
            for scenario, spec in zip(scenarios, specs)
            for arm in arms
        ]
        outcomes = [f.result() for f in futures]

    rows: list[AblationRow] = []
    failures: list[dict] = []
    for scenario_id, arm, result, error in sorted(outcomes, key=lambda o: (o[0], _cell_order(o[1]))):
        if result is None:
            log.warning("cell %s/%s failed: %s", scenario_id, arm, error)
            rows.append(AblationRow(scenario_id, arm, 1, SENTINEL))
            failures.append({"scenario_id": scenario_id, "arm": arm, "error": error})
            continue
        rows.extend(AblationRow(scenario_id, arm, t.iteration, t.error_count) for t in result.traces)
    return AblationReport(rows, summarize(rows, config.model_id, arms), failures)


def report_csv(report: AblationReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in report.rows:
        writer.writerow((row.scenario_id, row.arm, row.iteration, row.error_count))
    return buf.getvalue()


def report_json(report: AblationReport) -> str:
    return json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n"


def emit_report(report: AblationReport, fmt: str, out_path: Union[str, Path]) -> Path:
    if fmt == "csv":
        text = report_csv(report)
    elif fmt == "json":
        text = report_json(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    out_path = Path(out_path)
    out_path.write_text(text, encoding="utf-8")
    return out_path


def read_csv_rows(text: str) -> list[AblationRow]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    return [
        AblationRow(r["scenario_id"], r["arm"], int(r["iteration"]), int(r["error_count"]))
        for r in reader
    ]
