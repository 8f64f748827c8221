"""
Unit tests for the gate table.

Tests:
- Built-in gates are unitary and have the expected arities
- Registration of user gates and matrix entry formats
- Loading gate files
"""

import numpy as np
import pytest

from src.language.gates import BUILTIN_GATES, GateTable, parse_matrix
from src.models.errors import NotUnitaryError, ShapeError
from src.services import matrix_core as mc


@pytest.fixture
def gates() -> GateTable:
    return GateTable()


@pytest.mark.unit
class TestBuiltinGates:
    """The default gate set."""

    def test_all_builtins_are_unitary(self):
        for name, matrix in BUILTIN_GATES.items():
            assert mc.is_unitary(matrix), name

    @pytest.mark.parametrize("name,arity", [("X", 1), ("H", 1), ("T", 1), ("CNOT", 2), ("SWAP", 2), ("CZ", 2)])
    def test_arity(self, gates, name, arity):
        assert gates.arity(name) == arity

    def test_cnot_flips_second_wire_on_one(self, gates):
        cnot = gates["CNOT"]

        assert np.allclose(cnot @ np.array([0, 0, 1, 0]), [0, 0, 0, 1])
        assert np.allclose(cnot @ np.array([0, 1, 0, 0]), [0, 1, 0, 0])

    def test_names_sorted(self, gates):
        assert gates.names() == sorted(BUILTIN_GATES)


@pytest.mark.unit
class TestRegistration:
    """User-defined gates."""

    def test_register_replaces(self, gates):
        gates.register("X", [[1, 0], [0, 1]])

        assert np.allclose(gates["X"], np.eye(2))

    def test_non_unitary_rejected(self, gates):
        with pytest.raises(NotUnitaryError):
            gates.register("BAD", [[1, 1], [0, 1]])

    def test_size_must_be_power_of_two(self, gates):
        with pytest.raises(ShapeError):
            gates.register("TRI", np.eye(3))

    def test_one_by_one_rejected(self, gates):
        with pytest.raises(ShapeError):
            gates.register("PHASE", [[1j]])

    @pytest.mark.parametrize("entry,expected", [(1, 1 + 0j), ([0, 1], 1j), ("-1i", -1j), ("0.5+0.5j", 0.5 + 0.5j)])
    def test_entry_formats(self, entry, expected):
        assert parse_matrix([[entry]])[0, 0] == pytest.approx(expected)

    def test_pair_entries_need_two_numbers(self):
        with pytest.raises(ShapeError):
            parse_matrix([[[1, 2, 3]]])


@pytest.mark.unit
class TestGateFiles:
    """YAML gate files."""

    def test_load_file(self, tmp_path):
        path = tmp_path / "gates.yaml"
        path.write_text(
            "SX:\n  - [[0.5, 0.5], [0.5, -0.5]]\n  - [[0.5, -0.5], [0.5, 0.5]]\n"
            "NOT:\n  - [0, 1]\n  - [1, 0]\n",
            encoding="utf-8",
        )
        table = GateTable(builtins=False)

        assert table.load_file(path) == ["SX", "NOT"]
        assert np.allclose(table["SX"] @ table["SX"], BUILTIN_GATES["X"])
        assert table.arity("NOT") == 1

    def test_load_file_with_non_unitary(self, tmp_path):
        path = tmp_path / "gates.yaml"
        path.write_text("BAD:\n  - [1, 1]\n  - [0, 1]\n", encoding="utf-8")

        with pytest.raises(NotUnitaryError):
            GateTable().load_file(path)

    def test_load_file_must_be_mapping(self, tmp_path):
        path = tmp_path / "gates.yaml"
        path.write_text("- [1, 0]\n", encoding="utf-8")

        with pytest.raises(ShapeError):
            GateTable().load_file(path)
