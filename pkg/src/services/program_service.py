"""
Program service: loads, denotes, runs and checks QPL programs.
Orchestrates the language front end and the semantic category for the CLI;
report serialization is delegated to the report service.
"""

import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import yaml

from src.language.evaluator import Evaluator, loop_reports
from src.language.gates import GateTable, parse_matrix
from src.language.parser import parse
from src.models.errors import QPLError, StateSpecError
from src.models.program import Program
from src.models.report import CheckReport, IterationReport, Picture, RunReport
from src.models.signature import BlockKey, Signature
from src.models.tolerance import Tolerance, resolve_tolerance
from src.services import matrix_core as mc
from src.services import qcat
from src.services.classical_embed import nat_weights
from src.services.qcat import EffectVector, QArrow, StateVector
from src.services.report_service import (
    ArrowDump,
    ReportService,
    effect_to_dict,
    key_label,
    state_to_dict,
)
from src.utils.config import get_config
from src.utils.logger import get_logger

DEMOS = {
    "teleport": "teleport.qpl",
    "coin": "coin_counter.qpl",
    "nat-add": "nat_add.qpl",
}


# ============================================================================
# State and effect specifications
# ============================================================================

def parse_key(text: str, signature: Signature) -> BlockKey:
    """
    Block key from text: ``3`` for Finite signatures, dotted ``2.3.0`` for
    NatLike ones. The trailing local index may be left out when the fiber has
    a single block (``2.3`` in nat⊗nat).

    Raises:
        StateSpecError: If the key is malformed or not a block of ``signature``
    """
    try:
        parts = [int(p) for p in text.strip().split(".")]
    except ValueError as e:
        raise StateSpecError(f"Malformed block key {text!r}") from e
    if signature.is_finite:
        key: BlockKey = parts[0] if len(parts) == 1 else tuple(parts)
    else:
        if len(parts) == signature.rank and len(signature.fiber) == 1:
            parts.append(0)
        key = tuple(parts)
    if not signature.is_valid_key(key):
        raise StateSpecError(f"{text!r} is not a block of {signature}")
    return key


def _parse_entries(spec: str, signature: Signature) -> List[Tuple[BlockKey, Any]]:
    entries = []
    for chunk in spec.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        if ":" not in chunk:
            raise StateSpecError(f"Expected 'key:value' in {chunk!r}")
        key_text, value_text = chunk.split(":", 1)
        try:
            value = yaml.safe_load(value_text)
        except yaml.YAMLError as e:
            raise StateSpecError(f"Malformed value {value_text.strip()!r}") from e
        if isinstance(value, str):
            try:
                value = float(value)
            except ValueError as e:
                raise StateSpecError(f"Malformed value {value_text.strip()!r}") from e
        entries.append((parse_key(key_text, signature), value))
    return entries


def _block_matrix(value: Any, dim: int, scalar_part: np.ndarray) -> np.ndarray:
    if isinstance(value, (int, float)):
        return float(value) * scalar_part
    try:
        return parse_matrix(value)
    except (TypeError, ValueError) as e:
        raise StateSpecError(f"Malformed matrix literal {value!r}") from e


def parse_state_spec(spec: Optional[str], signature: Signature, tol: Optional[Tolerance] = None) -> StateVector:
    """
    State from the mini-format ``key:value;key:value``.

    A number is a weight: on a 1×1 block it is the block itself, on a d×d block
    it is spread as weight·1/d. A matrix literal ``[[a, b], [c, d]]`` (entries
    may be ``[re, im]`` pairs) gives the block explicitly. An empty spec is the
    point mass on the first block (all variables 0, qbits in |0⟩).

    Raises:
        StateSpecError: On malformed text, wrong block sizes or a non-state
    """
    if not spec or not spec.strip():
        first: BlockKey = 0 if signature.is_finite else tuple([0] * (signature.rank + 1))
        dim = signature.block_dim(first)
        return StateVector(signature, {first: np.diag([1.0] + [0.0] * (dim - 1))}, tol)
    parts: Dict[BlockKey, np.ndarray] = {}
    for key, value in _parse_entries(spec, signature):
        dim = signature.block_dim(key)
        parts[key] = _block_matrix(value, dim, np.eye(dim) / dim)
    try:
        return StateVector(signature, parts, tol)
    except QPLError as e:
        raise StateSpecError(f"Invalid input state: {e}") from e


def parse_effect_spec(spec: Optional[str], signature: Signature, tol: Optional[Tolerance] = None) -> EffectVector:
    """
    Effect from the same mini-format; a number w on a d×d block means w·1.
    Unlisted blocks are 0. An empty spec is the truth predicate 1.
    """
    if not spec or not spec.strip():
        return qcat.unit_effect(signature)
    parts: Dict[BlockKey, np.ndarray] = {}
    for key, value in _parse_entries(spec, signature):
        dim = signature.block_dim(key)
        parts[key] = _block_matrix(value, dim, np.eye(dim))
    try:
        return EffectVector(signature, parts, tol=tol)
    except QPLError as e:
        raise StateSpecError(f"Invalid postcondition: {e}") from e


# ============================================================================
# Service
# ============================================================================

class ProgramService:
    """
    Runs and verifies QPL programs.

    Args:
        gates: Gate table (builtins only when omitted)
        tol: Tolerance (configured default when omitted)
        max_iter: Kleene iteration cap (configured default when omitted)
        report_service: Report service instance (creates a new one if not provided)
    """

    def __init__(
        self,
        gates: Optional[GateTable] = None,
        tol: Optional[Tolerance] = None,
        max_iter: Optional[int] = None,
        report_service: Optional[ReportService] = None,
    ):
        self.config = get_config()
        self.logger = get_logger("program_service")
        self.tol = resolve_tolerance(tol)
        self.gates = gates or GateTable(self.tol)
        self.max_iter = max_iter or self.config.max_iter
        self.report_service = report_service or ReportService()
        self.programs_dir = self.config.project_root / "programs"

    # ------------------------------------------------------------------
    # Loading and denotation
    # ------------------------------------------------------------------

    def load_program(self, path: Union[str, Path]) -> Program:
        """
        Read and parse a program file.

        Raises:
            OSError: If the file cannot be read
            ParseError: On a syntax error
        """
        with open(path, "r", encoding="utf-8") as f:
            source = f.read()
        program = parse(source)
        self.logger.info(f"Loaded {path}: {program.node_count()} statement(s), {len(program.procs)} procedure(s)")
        return program

    def denote(self, program: Program) -> QArrow:
        return Evaluator(self.gates, self.tol, self.max_iter).denote_program(program)

    def denote_file(self, path: Union[str, Path]) -> QArrow:
        return self.denote(self.load_program(path))

    # ------------------------------------------------------------------
    # run
    # ------------------------------------------------------------------

    def run_program(
        self,
        path: Union[str, Path],
        input_spec: Optional[str] = None,
        picture: Picture = Picture.SCHRODINGER,
        post_spec: Optional[str] = None,
    ) -> RunReport:
        """
        Denote a program and evaluate it on an input state and/or a postcondition.

        The Heisenberg picture computes wp on the blocks of the input state's
        support; whenever it runs, the duality residual between the two
        pictures on (input, post) is recorded.
        """
        start = time.perf_counter()
        arrow = self.denote_file(path)
        report = self.evaluate(arrow, str(path), input_spec, picture, post_spec)
        report.wall_time = time.perf_counter() - start
        return report

    def evaluate(
        self,
        arrow: QArrow,
        name: str,
        input_spec: Optional[str] = None,
        picture: Picture = Picture.SCHRODINGER,
        post_spec: Optional[str] = None,
    ) -> RunReport:
        state = parse_state_spec(input_spec, arrow.source, self.tol)
        report = RunReport(
            program=name,
            input=input_spec or "default",
            picture=picture,
            source=str(arrow.source),
            target=str(arrow.target),
        )
        if picture in (Picture.SCHRODINGER, Picture.BOTH):
            output = qcat.apply(arrow, state, self.tol)
            report.output_state = state_to_dict(output)
            report.total_weight = output.total_weight
        if picture in (Picture.HEISENBERG, Picture.BOTH):
            post = parse_effect_spec(post_spec, arrow.target, self.tol)
            pre = qcat.wp(arrow, post, keys=state.support, tol=self.tol)
            report.output_effect = effect_to_dict(pre)
            report.duality_residual = qcat.duality_residual(arrow, state, post, self.tol)
            report.expectation = {"probability": qcat.pairing(state, pre)}

        report.loops = loop_reports(arrow)
        report.converged = all(loop.converged for loop in report.loops)
        if not report.converged:
            self.logger.warning(f"{name}: a loop or recursion did not converge; result is an under-approximation")
        return report

    # ------------------------------------------------------------------
    # check
    # ------------------------------------------------------------------

    def check_program(self, path: Union[str, Path], samples: Optional[int] = None, seed: Optional[int] = None) -> CheckReport:
        """Verify the invariants of a program's denotation."""
        arrow = self.denote_file(path)
        return self.check_arrow(arrow, str(path), samples, seed)

    def check_arrow(
        self, arrow: QArrow, subject: str, samples: Optional[int] = None, seed: Optional[int] = None
    ) -> CheckReport:
        """
        CP per block, trace-nonincrease per column, subunitality of the
        dualized arrow and the duality residual on sampled (state, effect) pairs.

        NatLike arrows are checked on the columns reached from the default input.
        """
        seed = self.config.seed if seed is None else seed
        samples = self.config.check_samples if samples is None else samples
        rng = np.random.default_rng(seed)
        report = CheckReport(subject=subject, source=str(arrow.source), target=str(arrow.target), seed=seed)

        if not arrow.source.is_finite:
            qcat.apply(arrow, parse_state_spec(None, arrow.source, self.tol), self.tol)

        blocks = [block for _, _, block in arrow.blocks()]
        min_eig = min((block.choi.min_eigenvalue(self.tol) for block in blocks), default=0.0)
        cp_ok = all(block.choi.is_cp(self.tol) for block in blocks)
        report.add("completely positive", cp_ok, "min Choi eigenvalue", min_eig)

        excess = max(
            (
                float(np.max(mc.eigenvalues(qcat.column_unit_image(arrow, key)))) - 1.0
                for key in arrow.materialized_keys()
                if arrow.column(key)
            ),
            default=-1.0,
        )
        nonincreasing = qcat.is_trace_nonincreasing(arrow, self.tol)
        report.add("trace-nonincreasing", nonincreasing, "max column unit image - 1", excess)

        if not arrow.is_finite:
            report.add("subunital after dualize", True, "skipped for NatLike arrows")
            state = parse_state_spec(None, arrow.source, self.tol)
            residual = qcat.duality_residual(arrow, state, qcat.unit_effect(arrow.target), self.tol)
            report.add("duality", residual <= self.tol.eps_eq, "default input, unit effect", residual)
            return report

        report.add("subunital after dualize", qcat.is_subunital(qcat.dualize(arrow), self.tol))
        if nonincreasing:
            residual = self._sampled_duality(arrow, rng, samples)
            report.add("duality", residual <= self.tol.eps_eq, f"{samples} sampled pairs", residual)
        else:
            report.add("duality", False, "skipped: arrow is not trace-nonincreasing")
        self.logger.info(f"check {subject}: {'passed' if report.passed else 'FAILED'}")
        return report

    def _sampled_duality(self, arrow: QArrow, rng: np.random.Generator, samples: int) -> float:
        worst = 0.0
        for _ in range(samples):
            state = qcat.random_state(arrow.source, rng)
            effect = qcat.random_effect(arrow.target, rng)
            worst = max(worst, qcat.duality_residual(arrow, state, effect, self.tol))
        return worst

    def check_dump(self, path: Union[str, Path], samples: Optional[int] = None, seed: Optional[int] = None) -> CheckReport:
        """
        Verify an arrow dump. Blocks are checked on their Choi matrices first,
        so dumps holding maps that are not CP are still reported on.
        """
        seed = self.config.seed if seed is None else seed
        dump = self.report_service.load_arrow_dump(path)
        report = CheckReport(subject=str(path), source=str(dump.source), target=str(dump.target), seed=seed)

        cp_ok = True
        for row, col, choi in dump.blocks:
            value = choi.min_eigenvalue(self.tol)
            ok = choi.is_cp(self.tol)
            cp_ok = cp_ok and ok
            report.add(f"completely positive ({key_label(row)}, {key_label(col)})", ok, "min Choi eigenvalue", value)

        for name, ok, excess in self._dump_trace_condition(dump):
            report.add(name, ok, "max unit image - 1", excess)

        if not cp_ok:
            report.add("duality", False, "skipped: a block is not completely positive")
            return report

        columns: Dict[BlockKey, Dict[BlockKey, Any]] = {}
        for row, col, choi in dump.blocks:
            columns.setdefault(col, {})[row] = choi.to_kraus(self.tol)
        arrow = QArrow(dump.source, dump.target, columns=columns, picture=dump.picture)
        if dump.picture == Picture.HEISENBERG:
            arrow = qcat.dualize(arrow)
        checked = self.check_arrow(arrow, str(path), samples, seed)
        report.seed = checked.seed
        report.items.extend(item for item in checked.items if item.name != "completely positive")
        return report

    def _dump_trace_condition(self, dump: ArrowDump) -> List[Tuple[str, bool, float]]:
        """
        Choi-level trace condition: Σ_i E_ij*(1) ≤ 1 per column for Schrödinger
        dumps, Σ_j E_ij(1) ≤ 1 per row (subunitality) for Heisenberg dumps.
        """
        heisenberg = dump.picture == Picture.HEISENBERG
        sums: Dict[BlockKey, np.ndarray] = {}
        for row, col, choi in dump.blocks:
            if heisenberg:
                image, key = choi.apply(np.eye(choi.in_dim)), row
            else:
                image, key = choi.heisenberg_unit_image(), col
            sums[key] = sums[key] + image if key in sums else image
        label = "subunital row" if heisenberg else "trace-nonincreasing column"
        results = []
        for key, total in sorted(sums.items(), key=lambda kv: str(kv[0])):
            excess = float(np.max(mc.eigenvalues(total))) - 1.0
            ok = mc.loewner_leq(total, np.eye(total.shape[0]), self.tol)
            results.append((f"{label} {key_label(key)}", ok, excess))
        return results

    # ------------------------------------------------------------------
    # demo
    # ------------------------------------------------------------------

    def demo(self, name: str, seed: Optional[int] = None) -> RunReport:
        """
        Run a bundled program and compare it with its closed form.

        Raises:
            ValueError: For an unknown demo name
        """
        if name not in DEMOS:
            raise ValueError(f"Unknown demo {name!r}; choose from {', '.join(DEMOS)}")
        start = time.perf_counter()
        path = self.programs_dir / DEMOS[name]
        arrow = self.denote_file(path)

        if name == "teleport":
            report = self.evaluate(arrow, name, "0:[[0.5, 0.5], [0.5, 0.5]]", Picture.BOTH)
            distance = qcat.max_choi_distance(arrow, qcat.identity(qcat.qbit()))
            rng = np.random.default_rng(self.config.seed if seed is None else seed)
            residual = self._sampled_duality(arrow, rng, self.config.check_samples)
            report.duality_residual = max(report.duality_residual or 0.0, residual)
            report.expectation = {
                "choi_distance_to_identity": distance,
                "matches": distance <= 1e-9 and report.duality_residual <= self.tol.eps_eq,
            }
        elif name == "coin":
            report = self.evaluate(arrow, name)
            observed = nat_weights(qcat.apply(arrow, parse_state_spec(None, arrow.source, self.tol)))
            table = {n: [observed.get(n, 0.0), 2.0 ** -(n + 1)] for n in range(21)}
            error = max(abs(o - e) for o, e in table.values())
            report.expectation = {"table": table, "max_error": error, "matches": error <= 1e-6}
        else:
            report = self.evaluate(arrow, name, "2.3:1")
            weights = nat_weights(qcat.apply(arrow, parse_state_spec("2.3:1", arrow.source, self.tol)))
            report.expectation = {"weights": weights, "matches": abs(weights.get(5, 0.0) - 1.0) <= 1e-12}

        report.wall_time = time.perf_counter() - start
        self.logger.info(f"demo {name}: matches={report.expectation['matches']}")
        return report


def strict_failure(reports: List[IterationReport]) -> bool:
    """True when some Kleene chain stopped at the iteration cap."""
    return any(not r.converged for r in reports)


__all__ = [
    "DEMOS",
    "ProgramService",
    "parse_effect_spec",
    "parse_key",
    "parse_state_spec",
    "strict_failure",
]
