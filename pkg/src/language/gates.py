"""
Gate table: names of unitary operators available to programs.
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import yaml

from src.models.errors import NotUnitaryError, ShapeError
from src.models.tolerance import Tolerance
from src.services import matrix_core as mc
from src.services.matrix_core import CMatrix
from src.utils.logger import get_logger

_SQRT_HALF = 1.0 / np.sqrt(2.0)

BUILTIN_GATES: Dict[str, CMatrix] = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "H": _SQRT_HALF * np.array([[1, 1], [1, -1]], dtype=complex),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "T": np.array([[1, 0], [0, np.exp(1j * np.pi / 4)]], dtype=complex),
    "CNOT": np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
    ),
    "SWAP": np.array(
        [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
    ),
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
}


def _parse_entry(value: Any) -> complex:
    """Matrix entry from a number, a [re, im] pair or a string like '1j'."""
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ShapeError(f"Complex entries are [re, im] pairs, got {value}")
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        return complex(value.replace(" ", "").replace("i", "j"))
    return complex(value)


def parse_matrix(rows: List[List[Any]]) -> CMatrix:
    return mc.as_cmatrix([[_parse_entry(v) for v in row] for row in rows])


class GateTable:
    """Mapping name → unitary; every entry is checked when registered."""

    def __init__(self, tol: Optional[Tolerance] = None, builtins: bool = True):
        self.logger = get_logger("gates")
        self.tol = tol
        self._gates: Dict[str, CMatrix] = {}
        if builtins:
            for name, matrix in BUILTIN_GATES.items():
                self.register(name, matrix)

    def register(self, name: str, matrix: Union[CMatrix, List[List[Any]]]) -> None:
        """
        Add or replace a gate.

        Raises:
            NotUnitaryError: If the matrix is not unitary within eps_eq
            ShapeError: If its size is not a power of two
        """
        u = matrix if isinstance(matrix, np.ndarray) else parse_matrix(matrix)
        u = mc.require_unitary(u, self.tol)
        size = u.shape[0]
        if size < 2 or size & (size - 1):
            raise ShapeError(f"Gate {name} has size {size}, expected a power of two >= 2")
        self._gates[name] = u
        self.logger.debug(f"Registered gate {name} on {self.arity(name)} qbit(s)")

    def __contains__(self, name: str) -> bool:
        return name in self._gates

    def __getitem__(self, name: str) -> CMatrix:
        return self._gates[name]

    def names(self) -> List[str]:
        return sorted(self._gates)

    def arity(self, name: str) -> int:
        """Number of qbits the gate acts on."""
        return int(self._gates[name].shape[0]).bit_length() - 1

    def load_file(self, path: Union[str, Path]) -> List[str]:
        """
        Register gates from a YAML file of the form ``{name: [[entries...], ...]}``.

        Returns:
            Names of the gates registered
        """
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise ShapeError(f"Gate file {path} must map names to matrices")
        loaded = []
        for name, rows in data.items():
            try:
                self.register(str(name), rows)
            except NotUnitaryError:
                self.logger.error(f"Gate {name} in {path} is not unitary")
                raise
            loaded.append(str(name))
        self.logger.info(f"Loaded {len(loaded)} gate(s) from {path}")
        return loaded
