"""Analysis configuration: a JSON document validated against a shipped schema."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from ..exceptions import ValidationError

PIVOT_CHOICES = ("wald", "r", "rstar", "ra", "wald_a", "wstar")
VARIANT_CHOICES = ("skovgaard", "frw", "m1", "m2")
BUILTIN_DATA = ("urine", "sixteen")


def schema() -> dict:
    with resources.files("hoinfer.cli").joinpath("config_schema.json").open(encoding="utf-8") as fh:
        return json.load(fh)


@dataclass(frozen=True)
class AnalysisConfig:
    """Validated analysis settings.

    ``raw`` is the document as parsed; :meth:`to_dict` returns it unchanged so
    that a configuration survives a load and dump cycle.  ``base_dir`` is the
    directory of the configuration file, against which a relative
    ``data_path`` is resolved.
    """

    raw: dict
    base_dir: Path

    def get(self, key: str, default: Any = None) -> Any:
        return self.raw.get(key, default)

    @property
    def model_class(self) -> str:
        return self.raw["model_class"]

    @property
    def data_file(self) -> Path | None:
        p = self.raw.get("data_path")
        if p is None:
            return None
        path = Path(p)
        return path if path.is_absolute() else self.base_dir / path

    @property
    def pivots(self) -> list[str]:
        return list(self.raw.get("pivots", ["wald", "r", "rstar"]))

    @property
    def section(self) -> dict:
        """Model-class specific settings."""
        return dict(self.raw.get(self.model_class, {}))

    def to_dict(self) -> dict:
        return json.loads(json.dumps(self.raw))

    def dumps(self) -> str:
        return json.dumps(self.raw, sort_keys=True, indent=2)


def parse_config(doc: dict, base_dir: str | Path = ".") -> AnalysisConfig:
    """Validate a configuration document.

    Raises
    ------
    ValidationError
        With the JSON path of the first schema violation, or on
        inconsistent settings.
    """
    try:
        jsonschema.validate(doc, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValidationError(f"config {where}: {exc.message}") from None
    if ("data_path" in doc) == ("dataset" in doc):
        raise ValidationError("config needs exactly one of data_path or dataset")
    cls = doc["model_class"]
    sec = doc.get(cls, {})
    if cls == "nlreg" and "builtin" not in sec and "mean" not in sec:
        raise ValidationError("nlreg config needs a builtin model or a mean expression")
    if cls == "nlreg" and "start" not in sec:
        raise ValidationError("nlreg config needs start values")
    return AnalysisConfig(doc, Path(base_dir))


def load_config(path: str | Path) -> AnalysisConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path}: line {exc.lineno}: {exc.msg}") from None
    return parse_config(doc, path.parent)
