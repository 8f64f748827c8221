"""
Report service: JSON serialization of run reports, check reports and arrow dumps.
Complex numbers are written as [re, im] pairs. This service only converts and
writes; all evaluation happens in the program service.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import TypeAdapter, ValidationError

from src.models.errors import ShapeError, UnsupportedSignatureError
from src.models.report import ArrowDumpDict, BlockDumpDict, CheckReport, Picture, RunReport
from src.models.signature import BlockKey, Signature
from src.services.cpmap import ChoiMatrix
from src.services.matrix_core import CMatrix, as_cmatrix
from src.services.qcat import EffectVector, QArrow, StateVector
from src.utils.config import get_config
from src.utils.logger import get_logger

_DUMP_ADAPTER = TypeAdapter(ArrowDumpDict)


# ============================================================================
# Encoding helpers
# ============================================================================

def encode_matrix(matrix: CMatrix) -> List[List[List[float]]]:
    """Dense complex matrix as rows of [re, im] pairs."""
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(matrix)]


def decode_matrix(rows: List[List[Any]]) -> CMatrix:
    """Inverse of :func:`encode_matrix`; plain real entries are accepted too."""
    try:
        return as_cmatrix(
            [[complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v) for v in row] for row in rows]
        )
    except (TypeError, IndexError) as e:
        raise ShapeError(f"Malformed matrix literal: {e}") from e


def encode_key(key: BlockKey) -> Union[int, List[int]]:
    return list(key) if isinstance(key, tuple) else key


def decode_key(value: Any) -> BlockKey:
    return tuple(int(v) for v in value) if isinstance(value, (list, tuple)) else int(value)


def key_label(key: BlockKey) -> str:
    """Printable key: ``3`` or ``2.0`` for a nat point."""
    return ".".join(str(v) for v in key) if isinstance(key, tuple) else str(key)


def state_to_dict(state: StateVector) -> Dict[str, Any]:
    return {
        "signature": str(state.signature),
        "total_weight": state.total_weight,
        "blocks": [
            {"key": encode_key(key), "weight": float(np.trace(part).real), "matrix": encode_matrix(part)}
            for key, part in sorted(state.parts.items(), key=lambda kv: str(kv[0]))
        ],
    }


def effect_to_dict(effect: EffectVector) -> Dict[str, Any]:
    return {
        "signature": str(effect.signature),
        "default": effect.default,
        "blocks": [
            {"key": encode_key(key), "matrix": encode_matrix(part)}
            for key, part in sorted(effect.parts.items(), key=lambda kv: str(kv[0]))
        ],
    }


def arrow_to_dump(arrow: QArrow) -> ArrowDumpDict:
    """
    Serialize a Finite arrow: header, then the Choi matrix of every nonzero block.

    Raises:
        UnsupportedSignatureError: For NatLike endpoints
    """
    if not arrow.is_finite:
        raise UnsupportedSignatureError("Only arrows between Finite signatures can be dumped")
    blocks: List[BlockDumpDict] = [
        BlockDumpDict(
            row=out, col=key, in_dim=block.in_dim, out_dim=block.out_dim, choi=encode_matrix(block.choi.matrix)
        )
        for out, key, block in sorted(arrow.blocks(), key=lambda t: (t[1], t[0]))
    ]
    return ArrowDumpDict(
        source=list(arrow.source.blocks),
        target=list(arrow.target.blocks),
        picture=arrow.picture.value,
        iterations=[r.model_dump() for r in arrow.iterations],
        blocks=blocks,
    )


@dataclass
class ArrowDump:
    """Deserialized dump: blocks stay Choi matrices, so non-CP data can be inspected."""

    source: Signature
    target: Signature
    picture: Picture
    blocks: List[Tuple[BlockKey, BlockKey, ChoiMatrix]]


def dump_from_dict(data: Dict[str, Any]) -> ArrowDump:
    """
    Validate and decode an arrow dump.

    Raises:
        ShapeError: If fields are missing or block shapes disagree with the header
    """
    try:
        dump = _DUMP_ADAPTER.validate_python(data)
    except ValidationError as e:
        raise ShapeError(f"Malformed arrow dump: {e.error_count()} error(s), first: {e.errors()[0]['msg']}") from e
    for field in ("source", "target", "blocks"):
        if field not in dump:
            raise ShapeError(f"Arrow dump is missing {field!r}")

    source = Signature.finite(*dump["source"])
    target = Signature.finite(*dump["target"])
    blocks = []
    for entry in dump["blocks"]:
        row, col = decode_key(entry["row"]), decode_key(entry["col"])
        if not (source.is_valid_key(col) and target.is_valid_key(row)):
            raise ShapeError(f"Block ({row}, {col}) lies outside {source} -> {target}")
        if (entry["in_dim"], entry["out_dim"]) != (source.block_dim(col), target.block_dim(row)):
            raise ShapeError(f"Block ({row}, {col}) has dimensions that disagree with the header")
        blocks.append((row, col, ChoiMatrix(entry["in_dim"], entry["out_dim"], decode_matrix(entry["choi"]))))
    return ArrowDump(source, target, Picture(dump.get("picture", Picture.SCHRODINGER.value)), blocks)


class ReportService:
    """
    Writes and reads JSON reports.

    Args:
        output_dir: Directory for report files (configured ``output.report_dir`` by default)
    """

    def __init__(self, output_dir: Optional[str] = None):
        self.logger = get_logger("report_service")
        self.output_dir = Path(output_dir or get_config().report_dir)

    def _write(self, payload: Dict[str, Any], path: Union[str, Path]) -> str:
        filepath = Path(path)
        if not filepath.is_absolute() and filepath.parent == Path("."):
            filepath = self.output_dir / filepath
        filepath.parent.mkdir(parents=True, exist_ok=True)
        with open(filepath, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=False)
            f.write("\n")
        self.logger.info(f"Wrote report to {filepath}")
        return str(filepath)

    def write_run_report(self, report: RunReport, path: Union[str, Path]) -> str:
        return self._write(report.model_dump(mode="json"), path)

    def write_check_report(self, report: CheckReport, path: Union[str, Path]) -> str:
        payload = report.model_dump(mode="json")
        payload["passed"] = report.passed
        return self._write(payload, path)

    def write_arrow_dump(self, arrow: QArrow, path: Union[str, Path]) -> str:
        return self._write(dict(arrow_to_dump(arrow)), path)

    def load_arrow_dump(self, path: Union[str, Path]) -> ArrowDump:
        """
        Read an arrow dump written by :meth:`write_arrow_dump` (or by hand).

        Raises:
            OSError: If the file cannot be read
            ShapeError: If the content is not a valid dump
        """
        with open(path, "r", encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ShapeError(f"{path} is not valid JSON: {e}") from e
        dump = dump_from_dict(data)
        self.logger.info(f"Loaded arrow dump {dump.source} -> {dump.target} with {len(dump.blocks)} block(s)")
        return dump

    # ------------------------------------------------------------------
    # Plain-text rendering for standard output
    # ------------------------------------------------------------------

    def render_run(self, report: RunReport) -> str:
        lines = [
            f"program:  {report.program}",
            f"arrow:    {report.source} -> {report.target}  ({report.picture.value})",
        ]
        if report.input:
            lines.append(f"input:    {report.input}")
        if report.output_state is not None:
            lines.append(f"weight:   {report.total_weight:.12f}")
            for block in report.output_state["blocks"]:
                lines.append(f"  {key_label(decode_key(block['key'])):>8}  {block['weight']:.12f}")
        if report.output_effect is not None:
            lines.append(f"wp:       {len(report.output_effect['blocks'])} block(s)")
        for loop in report.loops:
            lines.append(
                f"{loop.kind}:    {loop.iterations} step(s), converged={loop.converged}, "
                f"last delta {loop.last_delta:.3e}"
            )
        if report.duality_residual is not None:
            lines.append(f"duality:  residual {report.duality_residual:.3e}")
        if report.expectation:
            for name, value in report.expectation.items():
                lines.append(f"expect:   {name} = {value}")
        lines.append(f"time:     {report.wall_time:.3f}s")
        return "\n".join(lines)

    def render_check(self, report: CheckReport) -> str:
        lines = [f"check {report.subject}: {report.source} -> {report.target} (seed {report.seed})"]
        for item in report.items:
            mark = "ok  " if item.passed else "FAIL"
            value = f" [{item.value:.3e}]" if item.value is not None else ""
            lines.append(f"  {mark} {item.name}{value} {item.detail}".rstrip())
        lines.append("PASSED" if report.passed else "FAILED")
        return "\n".join(lines)
