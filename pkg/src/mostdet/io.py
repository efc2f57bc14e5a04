"""File formats: tensor container, ICDAR ground truth, detection JSON, SVG.

Tensor container layout (all little-endian)::

    magic   8 bytes  b"MOSTTNSR"
    version u32      1
    ndim    u32
    dims    ndim x u32
    dtype   u32      0 = float32
    payload prod(dims) x 4 bytes, row-major
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from mostdet.geometry import GeometryError, canonical_vertex_order
from mostdet.labelgen import TextInstance
from mostdet.nms import Detections
from mostdet.pipeline import evaluate

MAGIC = b"MOSTTNSR"
VERSION = 1
DTYPE_F32 = 0


class FormatError(ValueError):
    """Malformed input file."""


def encode_tensor(array) -> bytes:
    a = np.ascontiguousarray(np.asarray(array), dtype="<f4")
    header = MAGIC + struct.pack(f"<II{a.ndim}I", VERSION, a.ndim, *a.shape)
    return header + struct.pack("<I", DTYPE_F32) + a.tobytes()


def decode_tensor(blob: bytes, expected_shape=None) -> np.ndarray:
    if len(blob) < 16 or blob[:8] != MAGIC:
        raise FormatError("not a tensor file")
    version, ndim = struct.unpack_from("<II", blob, 8)
    if version != VERSION:
        raise FormatError(f"unsupported tensor version {version}")
    off = 16
    if len(blob) < off + 4 * ndim + 4:
        raise FormatError("truncated header")
    dims = struct.unpack_from(f"<{ndim}I", blob, off)
    off += 4 * ndim
    (dtype,) = struct.unpack_from("<I", blob, off)
    off += 4
    if dtype != DTYPE_F32:
        raise FormatError(f"unsupported dtype code {dtype}")
    count = int(np.prod(dims, dtype=np.int64))
    if len(blob) - off != 4 * count:
        raise FormatError("payload size mismatch")
    if expected_shape is not None:
        _check_shape(dims, expected_shape)
    return np.frombuffer(blob, dtype="<f4", count=count, offset=off).reshape(dims).copy()


def _check_shape(dims, expected):
    if len(dims) != len(expected) or any(e is not None and d != e for d, e in zip(dims, expected)):
        raise FormatError(f"tensor shape {tuple(dims)} does not match expected {tuple(expected)}")


def write_tensor(path, array) -> None:
    Path(path).write_bytes(encode_tensor(array))


def read_tensor(path, expected_shape=None) -> np.ndarray:
    """Load a tensor file; ``expected_shape`` may use ``None`` as a wildcard."""
    return decode_tensor(Path(path).read_bytes(), expected_shape)


def parse_icdar_gt(lines) -> list[TextInstance]:
    """Parse ``x1,y1,...,x4,y4,transcription`` lines.

    Accepts a string, bytes, or an iterable of lines. ``###`` marks a
    don't-care region. Vertices are reordered clockwise, top-left first.
    """
    if isinstance(lines, bytes):
        lines = lines.decode("utf-8-sig")
    if isinstance(lines, str):
        lines = lines.splitlines()
    out = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.lstrip("\ufeff").strip()
        if not line:
            continue
        fields = line.split(",")
        if len(fields) < 9:
            raise FormatError(f"line {lineno}: expected 8 coordinates and a transcription")
        try:
            coords = [float(v) for v in fields[:8]]
        except ValueError:
            raise FormatError(f"line {lineno}: non-numeric coordinate") from None
        text = ",".join(fields[8:]).strip()
        try:
            quad = canonical_vertex_order(np.array(coords).reshape(4, 2))
        except GeometryError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
        out.append(TextInstance(quad, dont_care=text == "###", text=text))
    return out


def read_icdar_gt(path) -> list[TextInstance]:
    return parse_icdar_gt(Path(path).read_bytes())


def detections_to_records(dets) -> list[dict]:
    dets = dets if isinstance(dets, Detections) else Detections.from_boxes(dets)
    return [
        {
            "points": [[float(x), float(y)] for x, y in dets.quads[i]],
            "score": float(dets.scores[i]),
            "weights": dict(zip("lrtb", (float(w) for w in dets.weights[i]))),
        }
        for i in range(len(dets))
    ]


def records_to_detections(records) -> Detections:
    if not isinstance(records, list):
        raise FormatError("detection file must hold a JSON array of records")
    quads, scores, weights = [], [], []
    for k, rec in enumerate(records):
        try:
            pts = np.asarray(rec["points"], dtype=np.float64)
            score = float(rec["score"])
            w = rec.get("weights", {"l": 1.0, "r": 1.0, "t": 1.0, "b": 1.0})
            wv = [float(w[c]) for c in "lrtb"]
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"record {k}: {exc!r}") from None
        if pts.shape != (4, 2) or not np.all(np.isfinite(pts)):
            raise FormatError(f"record {k}: points must be 4 finite (x, y) pairs")
        quads.append(pts)
        scores.append(score)
        weights.append(wv)
    if not quads:
        return Detections.empty()
    return Detections(quads, scores, weights)


def write_detections(path, dets) -> None:
    Path(path).write_text(json.dumps(detections_to_records(dets), indent=1) + "\n")


def read_detections(path) -> Detections:
    try:
        records = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    return records_to_detections(records)


def _points_attr(quad) -> str:
    return " ".join(f"{x:.2f},{y:.2f}" for x, y in quad)


def render_svg(image_size, detections, gts=None, iou_thresh: float = 0.5) -> str:
    """SVG overlay. With ground truth, matched detections are green and
    unmatched ones red; ground truth is drawn dashed."""
    H, W = image_size
    dets = detections if isinstance(detections, Detections) else Detections.from_boxes(detections)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect class="canvas" x="0" y="0" width="{W}" height="{H}" fill="white"/>',
    ]
    colors = ["blue"] * len(dets)
    if gts is not None:
        for g in gts:
            stroke = "gray" if g.dont_care else "black"
            out.append(f'<polygon class="gt" points="{_points_attr(g.quad)}" fill="none" '
                       f'stroke="{stroke}" stroke-dasharray="4 2" stroke-width="1"/>')
        result = evaluate(dets, gts, (iou_thresh,))[iou_thresh]
        colors = ["red"] * len(dets)
        for det_idx, _, _ in result.matches:
            colors[det_idx] = "green"
    for i in range(len(dets)):
        out.append(f'<polygon class="det" points="{_points_attr(dets.quads[i])}" fill="none" '
                   f'stroke="{colors[i]}" stroke-width="2" data-score="{dets.scores[i]:.4f}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
