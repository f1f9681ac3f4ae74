"""Reading and writing model, specification and supervisor files."""
from __future__ import annotations

import json
from importlib.resources import files
from pathlib import Path
from typing import Union

from .model import Pomdp
from .pctl import BoundedUntilSpec, parse_spec
from .supervisor import ZaDfa

PathLike = Union[str, Path]

MODEL_KEYS = ("states", "initial", "actions", "observations", "transitions", "observation_fn")


class InputFileError(ValueError):
    """A file is missing, not valid JSON, or structurally malformed."""


def _read_json(path: PathLike):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise InputFileError(f"{path}: {e.strerror}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise InputFileError(f"{path}: {e.msg} at line {e.lineno}, column {e.colno}") from e


def model_from_json(data) -> Pomdp:
    if not isinstance(data, dict):
        raise InputFileError("model file must hold a JSON object")
    missing = [key for key in MODEL_KEYS if key not in data]
    if missing:
        raise InputFileError(f"model file lacks {', '.join(missing)}")
    try:
        return Pomdp.from_dicts(data["states"], data["initial"], data["actions"], data["observations"],
                                data["transitions"], data["observation_fn"],
                                data.get("labels"), data.get("ap"))
    except (ValueError, TypeError, AttributeError) as e:
        raise InputFileError(f"malformed model: {e}") from e


def load_model(path: PathLike) -> Pomdp:
    return model_from_json(_read_json(path))


def model_to_json(pomdp: Pomdp) -> dict:
    return pomdp.to_dicts()


def load_spec(path_or_text: PathLike) -> BoundedUntilSpec:
    """Parse a specification given as a file path or as formula text."""
    p = Path(str(path_or_text))
    text = p.read_text(encoding="utf-8") if p.is_file() else str(path_or_text)
    return parse_spec(text.strip())


def load_supervisor(path: PathLike) -> ZaDfa:
    data = _read_json(path)
    try:
        return ZaDfa.from_json(data)
    except (KeyError, TypeError, ValueError) as e:
        raise InputFileError(f"malformed supervisor: {e}") from e


def save_supervisor(dfa: ZaDfa, path: PathLike):
    Path(path).write_text(dfa.dumps() + "\n", encoding="utf-8")


def fixture_dir(name: str = "worked_example") -> Path:
    return Path(str(files("pomdp_lstar.fixtures") / name))


def load_fixture(name: str = "worked_example"):
    """``(pomdp, spec)`` of a bundled example."""
    d = fixture_dir(name)
    return load_model(d / "model.json"), load_spec(d / "spec.pctl")
