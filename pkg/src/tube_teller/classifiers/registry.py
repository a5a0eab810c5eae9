from __future__ import annotations

from typing import TYPE_CHECKING, Any, Dict, Type, Union

import importlib_metadata

from tube_teller.errors import ConfigError

if TYPE_CHECKING:
    from tube_teller.classifiers.base import PatchClassifier

# Third-party patch classifiers plug in through this entry point group; the
# entry point name is what `--classifier` selects.
_ENTRY_POINT = "tube_teller.classifiers"

# Built-in classifiers are known even when the package metadata isn't
# installed (e.g. running from a source checkout).
_BUILTINS = {
    "reference": "tube_teller.classifiers.reference:ReferenceModel",
    "oracle": "tube_teller.classifiers.oracle:OracleClassifier",
}

_CLASSIFIER_REGISTRY: Dict[
    str, Union[importlib_metadata.EntryPoint, Type["PatchClassifier"]]
] = {}


def _reload_registry() -> None:
    _CLASSIFIER_REGISTRY.update(
        {
            name: importlib_metadata.EntryPoint(name=name, value=value, group=_ENTRY_POINT)
            for name, value in _BUILTINS.items()
        }
    )
    entry_points = importlib_metadata.entry_points()
    _CLASSIFIER_REGISTRY.update(
        {
            # Loaded lazily by _get_from_registry.
            entry_point.name: entry_point
            for entry_point in entry_points.select(group=_ENTRY_POINT)
        }
    )


def _get_from_registry(key: str) -> Type["PatchClassifier"]:
    """The classifier class registered as `key`, imported on first use."""
    classifier_or_ep = _CLASSIFIER_REGISTRY[key]
    if isinstance(classifier_or_ep, importlib_metadata.EntryPoint):
        _CLASSIFIER_REGISTRY[key] = classifier_or_ep = classifier_or_ep.load()
    return classifier_or_ep


_reload_registry()


def _lookup(kind: str) -> Type["PatchClassifier"]:
    try:
        return _get_from_registry(kind)
    except KeyError as exc:
        raise ConfigError(f"Unknown classifier: '{kind}'") from exc


def get_classifier(kind: str, *args: Any, **kwargs: Any) -> PatchClassifier:
    """Instantiate a registered classifier, e.g. `get_classifier("oracle", gt=mask)`."""
    return _lookup(kind)(*args, **kwargs)


def load_classifier(path: Any, kind: str = "reference") -> PatchClassifier:
    """Load a stored classifier of the given kind from disk."""
    return _lookup(kind).load(path)
