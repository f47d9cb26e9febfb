"""Skeleton generation: a fixed Jinja2 template filled from a specification.

The default rendering lists one ``requirement`` block per specification
requirement, each carrying its description as ``doc`` text. A package doc
line, attribute records and constraint records are opt-in through
:class:`RenderOptions`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Optional, Sequence

import jinja2

from . import spec as spec_model
from .llm import Backend, ChatRequest, extract_fenced
from .prompts import PromptCatalog, load_catalog
from .spec import StructuredSpecification, sanitize_identifier
from .sysml import RequirementDecl, normalize_doc, parse

log = logging.getLogger(__name__)

PACKAGE_DOC = "This is the package containing the requirements"


class TemplateError(ValueError):
    """A record value that cannot be rendered as valid SysML."""


@dataclass(frozen=True)
class SkeletonText:
    text: str
    # set when an LLM-adapted render fell back to the direct render
    fallback_reason: Optional[str] = None

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True)
class AttributeRecord:
    attribute: str
    value: Optional[str] = None
    units: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.attribute.strip():
            raise ValueError("attribute name is empty")


@dataclass(frozen=True)
class ConstraintRecord:
    """A constraint attached to one requirement.

    With a ``formula`` it renders as ``require constraint { formula }``;
    without one the description is kept as doc text.
    """

    name: Optional[str] = None
    formula: Optional[str] = None
    description: Optional[str] = None

    def __post_init__(self) -> None:
        if self.formula is None and not (self.description or "").strip():
            raise ValueError("constraint record needs a formula or a description")


@dataclass(frozen=True)
class RenderOptions:
    include_package_doc: bool = False
    # keyed by requirement name as written in the specification
    attribute_records: Mapping[str, Sequence[AttributeRecord]] = field(default_factory=dict)
    constraint_records: Mapping[str, Sequence[ConstraintRecord]] = field(default_factory=dict)


_env = jinja2.Environment(
    autoescape=False,
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=True,
    undefined=jinja2.StrictUndefined,
)
_template = _env.from_string(
    resources.files("systemp.templates").joinpath("skeleton.sysml.j2").read_text(encoding="utf-8")
)


def _probe(fragment: str, what: str) -> None:
    report = parse(f"package P {{ requirement R {{ {fragment} }} }}")
    if not report.ok:
        raise TemplateError(f"{what} does not render as valid SysML: {report.diagnostics[0].message}")


def _attribute_line(record: AttributeRecord) -> str:
    text = sanitize_identifier(record.attribute)
    if record.value is not None and record.value.strip():
        text += f" = {record.value.strip()}"
        if record.units is not None and record.units.strip():
            text += f" {record.units.strip()}"
    _probe(f"attribute {text};", f"attribute {record.attribute!r}")
    return text


def _constraint_context(record: ConstraintRecord) -> dict:
    name = f" {sanitize_identifier(record.name)}" if record.name else ""
    if record.formula is not None:
        formula = " ".join(record.formula.split())
        _probe(f"require constraint{name} {{ {formula} }}", f"constraint {record.name or formula!r}")
        return {"name": name, "formula": formula, "doc": None}
    label = f"{record.name}: " if record.name else ""
    return {"name": name, "formula": None, "doc": normalize_doc(label + (record.description or ""))}


def _lookup(records: Mapping[str, Sequence], raw_name: str, ident: str) -> Sequence:
    if raw_name in records:
        return records[raw_name]
    return records.get(ident, ())


def render_skeleton(
    spec: StructuredSpecification, options: Optional[RenderOptions] = None
) -> SkeletonText:
    options = options or RenderOptions()
    requirements = []
    for raw_name, description in spec.requirements.items():
        ident = sanitize_identifier(raw_name)
        requirements.append(
            {
                "name": ident,
                "doc": normalize_doc(description),
                "attributes": [
                    _attribute_line(r) for r in _lookup(options.attribute_records, raw_name, ident)
                ],
                "constraints": [
                    _constraint_context(r) for r in _lookup(options.constraint_records, raw_name, ident)
                ],
            }
        )
    text = _template.render(
        package_name=sanitize_identifier(spec.package_name),
        package_doc=PACKAGE_DOC if options.include_package_doc else None,
        requirements=requirements,
    )
    text = "\n".join(line.rstrip() for line in text.splitlines()) + "\n"
    return SkeletonText(text)


def _spec_from_sysml(text: str, original: StructuredSpecification) -> StructuredSpecification:
    report = parse(text)
    if not report.ok or not report.model.packages:
        raise ValueError("reply is not an error-free SysML package")
    pkg = report.model.packages[0]
    requirements = {}
    for member in pkg.members:
        if isinstance(member, RequirementDecl):
            if not member.doc:
                raise ValueError(f"requirement {member.name} has no doc text")
            requirements[member.name] = member.doc
    return StructuredSpecification(
        pkg.name, dict(original.attributes), dict(original.constraints), requirements
    )


def adapt_reply(reply: str, original: StructuredSpecification) -> StructuredSpecification:
    """Normalize a template-generator reply into a specification.

    The reply may be a specification document or SysML text; either way it
    must keep every requirement of ``original``.
    """
    payload = extract_fenced(reply).text
    try:
        adapted = spec_model.from_reply(payload)
    except spec_model.SpecError:
        adapted = _spec_from_sysml(payload, original)
    if len(adapted.requirements) != len(original.requirements):
        raise ValueError(
            f"reply has {len(adapted.requirements)} requirements, expected {len(original.requirements)}"
        )
    return adapted


def llm_adapt_then_render(
    backend: Backend,
    spec: StructuredSpecification,
    options: Optional[RenderOptions] = None,
    *,
    catalog: Optional[PromptCatalog] = None,
    model_id: str = "",
    temperature: float = 0.0,
    meta: Optional[Mapping[str, str]] = None,
) -> SkeletonText:
    """Ask the LLM to restate ``spec`` for the template, then render it.

    Any reply that cannot be normalized falls back to rendering ``spec``
    directly; the fallback reason is kept on the returned skeleton.
    Backend errors propagate.
    """
    catalog = catalog or load_catalog()
    request = ChatRequest(
        system_prompt=catalog.p_tga,
        turns=(("user", spec_model.to_json(spec)),),
        model_id=model_id,
        temperature=temperature,
        meta={**(meta or {}), "agent": "template"},
    )
    response = backend.complete(request)
    try:
        adapted = adapt_reply(response.content, spec)
        return render_skeleton(adapted, options)
    except (ValueError, TemplateError) as exc:
        log.info("template reply unusable, rendering directly: %s", exc)
        return SkeletonText(render_skeleton(spec, options).text, fallback_reason=str(exc))
