import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from generators import random_spec
from systemp.llm import ScriptedBackend
from systemp.spec import StructuredSpecification, sanitize_identifier, to_json
from systemp.sysml import RequirementDecl, normalize_doc, parse
from systemp.template import (
    PACKAGE_DOC,
    AttributeRecord,
    ConstraintRecord,
    RenderOptions,
    TemplateError,
    llm_adapt_then_render,
    render_skeleton,
)


def test_bikefork_render_text(bikefork_spec):
    assert render_skeleton(bikefork_spec).text == (
        "package BikeFork {\n"
        "    requirement Material {\n"
        "        doc /* The bike fork should be made of aluminum. */\n"
        "    }\n"
        "\n"
        "    requirement PivotType {\n"
        "        doc /* The bike fork should have a 1\" 1/8 Aheadset pivot. */\n"
        "    }\n"
        "}\n"
    )


def test_no_requirements_with_package_doc():
    spec = StructuredSpecification("X")
    text = render_skeleton(spec, RenderOptions(include_package_doc=True)).text
    assert text == f"package X {{\n    doc /* {PACKAGE_DOC} */\n}}\n"
    assert parse(text).model.packages[0].doc == PACKAGE_DOC


def test_no_requirements():
    assert render_skeleton(StructuredSpecification("X")).text == "package X {\n}\n"


def test_attribute_and_constraint_records(bikefork_spec):
    options = RenderOptions(
        attribute_records={"Material": [AttributeRecord("mass", "3", "kg"), AttributeRecord("color")]},
        constraint_records={"Material": [ConstraintRecord("light", "mass  <\n 3"),
                                         ConstraintRecord(description="must be recyclable")]},
    )
    text = render_skeleton(bikefork_spec, options).text
    assert "        attribute mass = 3 kg;\n" in text
    assert "        attribute color;\n" in text
    assert "        require constraint light {\n            mass < 3\n        }\n" in text
    assert "        doc /* must be recyclable */\n" in text
    req = parse(text).model.packages[0].members[0]
    assert req.name == "Material" and len(req.members) == 4


def test_bad_record_is_rejected(bikefork_spec):
    options = RenderOptions(constraint_records={"Material": [ConstraintRecord(formula="(x < 3")]})
    with pytest.raises(TemplateError):
        render_skeleton(bikefork_spec, options)


def test_doc_terminator_is_escaped():
    spec = StructuredSpecification("P", requirements={"R": "ends */ early"})
    report = parse(render_skeleton(spec).text)
    assert report.ok
    assert report.model.packages[0].members[0].doc == "ends * / early"


@settings(max_examples=200, deadline=None)
@given(st.randoms(use_true_random=False), st.booleans())
def test_skeleton_validity(rng, package_doc):
    spec = random_spec(rng)
    report = parse(render_skeleton(spec, RenderOptions(include_package_doc=package_doc)).text)
    assert report.error_count == 0
    (pkg,) = report.model.packages
    reqs = [m for m in pkg.members if isinstance(m, RequirementDecl)]
    assert [r.name for r in reqs] == [sanitize_identifier(n) for n in spec.requirements]
    assert [r.doc for r in reqs] == [normalize_doc(d) for d in spec.requirements.values()]


def test_render_is_deterministic(bikefork_spec):
    assert render_skeleton(bikefork_spec) == render_skeleton(bikefork_spec)


def _template_backend(content):
    return ScriptedBackend([{"agent": "template", "content": content}])


def test_llm_echo_matches_direct_render(bikefork_spec):
    backend = _template_backend("'''\n" + to_json(bikefork_spec) + "\n'''")
    skeleton = llm_adapt_then_render(backend, bikefork_spec)
    assert skeleton.text == render_skeleton(bikefork_spec).text
    assert skeleton.fallback_reason is None
    request = backend.requests[0]
    assert request.meta["agent"] == "template"
    assert request.turns == (("user", to_json(bikefork_spec)),)


def test_llm_sysml_reply_is_accepted(bikefork_spec):
    backend = _template_backend("'''\n" + render_skeleton(bikefork_spec).text + "'''")
    skeleton = llm_adapt_then_render(backend, bikefork_spec)
    assert skeleton.fallback_reason is None
    assert skeleton.text == render_skeleton(bikefork_spec).text


@pytest.mark.parametrize("reply", [
    "garbage",
    "'''\npackage P { alias }\n'''",
    '{"Package": "P", "attributes": {}, "constraints": {}, "requirements": {}}',
])
def test_llm_garbage_falls_back(bikefork_spec, reply):
    skeleton = llm_adapt_then_render(_template_backend(reply), bikefork_spec)
    assert skeleton.text == render_skeleton(bikefork_spec).text
    assert skeleton.fallback_reason
