"""System prompts for the four agents.

The bundled texts live in ``systemp/data/prompts``; a directory holding
files with the same names overrides them one by one.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Optional, Union


@dataclass(frozen=True)
class PromptCatalog:
    p_rga: str
    p_tga: str
    p_wa_with_template: str
    p_wa_without_template: str
    p_pa: str

    def writer_prompt(self, use_template: bool) -> str:
        return self.p_wa_with_template if use_template else self.p_wa_without_template


PROMPT_NAMES = tuple(f.name for f in fields(PromptCatalog))


def _read(path) -> str:
    text = path.read_text(encoding="utf-8")
    return text[:-1] if text.endswith("\n") else text


def load_catalog(prompts_dir: Optional[Union[str, Path]] = None) -> PromptCatalog:
    bundled = resources.files("systemp.data").joinpath("prompts")
    texts = {}
    for name in PROMPT_NAMES:
        override = Path(prompts_dir) / f"{name}.txt" if prompts_dir else None
        if override is not None and override.is_file():
            texts[name] = _read(override)
        else:
            texts[name] = _read(bundled.joinpath(f"{name}.txt"))
    return PromptCatalog(**texts)
