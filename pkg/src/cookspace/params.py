"""Named trainable arrays with paired gradient buffers, and checkpoint IO.

A ``Parameter`` owns two same-shaped float64 arrays: the value and the
gradient accumulator. Frozen parameters keep their buffers but enter the
computation graph as constants, so no gradient ever reaches them and no
optimizer update ever touches them.

Checkpoints are a single JSON document: format version, rng seed, and a
map of parameter name to shape plus flat row-major value list. Values
round-trip bit-exactly (JSON floats are written with shortest-repr).
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .exceptions import ContractError, NumericFaultError
from .tape import Node, Tape

CHECKPOINT_FORMAT_VERSION = 1


class Parameter:
    __slots__ = ("name", "value", "grad", "frozen")

    def __init__(self, name: str, value: np.ndarray, frozen: bool = False):
        self.name = name
        self.value = np.array(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.frozen = frozen

    def as_input(self, tape: Tape | None):
        """Graph input for this parameter: a leaf node, or a constant.

        Frozen parameters (and any parameter in inference mode, i.e.
        ``tape is None``) enter as plain arrays; trainable ones enter as
        nodes whose gradient buffer is this parameter's accumulator.
        """
        if tape is None or self.frozen:
            return self.value
        return Node(self.value, grad=self.grad)

    def __repr__(self) -> str:
        tag = ", frozen" if self.frozen else ""
        return f"Parameter({self.name!r}, shape={self.value.shape}{tag})"


class ParamStore:
    """Uniquely named parameters plus the seed their values derive from."""

    def __init__(self, rng_seed: int = 0):
        self.rng_seed = int(rng_seed)
        self._entries: dict[str, Parameter] = {}

    def add(self, name: str, value: np.ndarray, frozen: bool = False) -> Parameter:
        if name in self._entries:
            raise ContractError(f"parameter {name!r} already registered")
        entry = Parameter(name, value, frozen=frozen)
        self._entries[name] = entry
        return entry

    def __getitem__(self, name: str) -> Parameter:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._entries.values())

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def trainable(self) -> Iterable[Parameter]:
        return (p for p in self._entries.values() if not p.frozen)

    def zero_grads(self) -> None:
        for entry in self._entries.values():
            entry.grad[...] = 0.0

    def save(self, path: str | Path) -> None:
        doc = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "rng_seed": self.rng_seed,
            "params": {},
        }
        for name, entry in self._entries.items():
            if not np.all(np.isfinite(entry.value)):
                raise NumericFaultError(f"parameter {name!r} holds non-finite values")
            doc["params"][name] = {
                "shape": list(entry.value.shape),
                "data": entry.value.reshape(-1).tolist(),
            }
        Path(path).write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ParamStore":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        version = doc.get("format_version")
        if version != CHECKPOINT_FORMAT_VERSION:
            raise ContractError(f"unsupported checkpoint format version {version!r}")
        store = cls(rng_seed=doc["rng_seed"])
        for name, spec in doc["params"].items():
            value = np.asarray(spec["data"], dtype=np.float64).reshape(spec["shape"])
            store.add(name, value)
        return store
