"""Regenerate ``src/systemp/data/ablation_script.json``.

The script drives the scripted backend through the bundled scenarios:
every writer response is a completed model with a chosen number of
seeded syntax errors, so each cell follows a fixed error-count trajectory.
Run from the repository root: ``python scripts/build_ablation_script.py``.
"""

import json
from pathlib import Path

from systemp.spec import from_json, sanitize_identifier
from systemp.sysml import parse

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "src" / "systemp" / "data"

# with_template: four scenarios converge; without_template: only fork does
TRAJECTORIES = {
    "drivetrain": {"with_template": [2, 1, 0], "without_template": [5, 4, 4, 3, 3]},
    "electric_bike": {"with_template": [0], "without_template": [4, 3, 3, 2, 2]},
    "fork": {"with_template": [1, 0], "without_template": [3, 2, 1, 0]},
    "mountain_bike": {"with_template": [3, 2, 2, 1, 1], "without_template": [5, 5, 4, 4, 3]},
    "tire": {"with_template": [2, 0], "without_template": [4, 4, 3, 3, 2]},
}


def seed(line: str, kind: int) -> str:
    """Turn one valid attribute line into a line with exactly one syntax error."""
    if kind == 0:
        return line.rstrip(";")  # missing semicolon
    if kind == 1:
        return line.replace("attribute", "alias", 1)  # unknown keyword
    if kind == 2:
        return line.replace("= ", "= (", 1)  # unclosed parenthesis
    if kind == 3:
        return line.replace(";", " @;")  # stray character
    return line.replace("attribute ", "attribute def ", 1)  # SysML 'def' not in subset


def completed_model(spec, with_docs: bool, errors: int) -> str:
    """A completed model; the first ``errors`` attribute lines carry a seed."""
    body = []  # (indent, text, seedable)
    for i, (name, desc) in enumerate(spec.requirements.items()):
        ident = sanitize_identifier(name)
        body.append((1, f"requirement {ident} {{", False))
        if with_docs:
            body.append((2, f"doc /* {desc} */", False))
        body.append((2, f"attribute target{i + 1} = {10 * (i + 1)};", True))
        body.append((1, "}", False))
    body.append((1, f"part {sanitize_identifier(spec.package_name)}Design {{", False))
    for j, name in enumerate(spec.attributes):
        body.append((2, f"attribute {sanitize_identifier(name)} = {j + 1};", True))
    body.append((1, "}", False))

    lines, seeded = [f"package {sanitize_identifier(spec.package_name)} {{"], 0
    for indent, text, seedable in body:
        if seedable and seeded < errors:
            text = seed(text, seeded % 5)
            seeded += 1
        lines.append("    " * indent + text)
    lines.append("}")
    if seeded != errors:
        raise ValueError(f"{spec.package_name}: only {seeded} seedable lines for {errors} errors")
    return "\n".join(lines) + "\n"


def main() -> None:
    entries = []
    for scenario, arms in TRAJECTORIES.items():
        spec_text = (DATA / "specs" / f"{scenario}.json").read_text(encoding="utf-8")
        spec = from_json(spec_text)
        entries.append({"agent": "specification", "scenario": scenario,
                        "responses": [f"'''\n{spec_text.strip()}\n'''"]})
        for arm, trajectory in arms.items():
            responses = []
            for expected in trajectory:
                text = completed_model(spec, arm == "with_template", expected)
                actual = parse(text).error_count
                assert actual == expected, (scenario, arm, expected, actual, text)
                responses.append(f"'''\n{text}'''")
            entries.append({"agent": "writer", "scenario": scenario, "arm": arm,
                            "responses": responses})
    out = DATA / "ablation_script.json"
    out.write_text(json.dumps({"entries": entries}, indent=2, ensure_ascii=False) + "\n",
                   encoding="utf-8")
    print(f"wrote {out} ({len(entries)} entries)")


if __name__ == "__main__":
    main()
