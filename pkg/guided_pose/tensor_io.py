"""CPT1 tensor codec, scene text schema and point-cloud readers.

A tensor is a numpy ``float32`` array of rank <= 4. On disk it is the magic
``CPT1``, one unsigned byte of rank, one little-endian ``uint32`` per extent and
the values as little-endian ``float32`` in row-major order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, List, Sequence, Tuple, Union

import numpy as np

from .errors import (
    SceneSchemaError,
    ShapeError,
    TensorDataError,
    TensorFormatError,
    TensorLengthError,
    TensorWriteError,
    ValidationError,
)
from .pose_geometry import CameraIntrinsics, PoseEstimate

MAGIC = b"CPT1"
MAX_RANK = 4

PathLike = Union[str, Path]


@dataclass(frozen=True)
class SceneObject:
    class_id: int
    pose: PoseEstimate
    model_ref: str
    symmetric: bool = False


@dataclass(frozen=True)
class SceneDescription:
    objects: Tuple[SceneObject, ...]
    intrinsics: CameraIntrinsics
    image_size: Tuple[int, int]

    def __post_init__(self) -> None:
        height, width = self.image_size
        if height <= 0 or width <= 0:
            raise ValidationError(f"image size must be positive, got {self.image_size}")
        seen = set()
        for obj in self.objects:
            if obj.class_id < 1:
                raise ValidationError(f"class ids start at 1, got {obj.class_id}")
            if obj.class_id in seen:
                raise ValidationError(f"class id {obj.class_id} appears more than once")
            seen.add(obj.class_id)

    @property
    def class_ids(self) -> Tuple[int, ...]:
        return tuple(sorted(obj.class_id for obj in self.objects))

    def object_for(self, class_id: int) -> SceneObject:
        for obj in self.objects:
            if obj.class_id == class_id:
                return obj
        raise KeyError(class_id)


# -- CPT1 ---------------------------------------------------------------------


def encode_tensor(t: np.ndarray) -> bytes:
    array = np.asarray(t)
    if array.ndim > MAX_RANK:
        raise ShapeError(f"tensor rank {array.ndim} exceeds {MAX_RANK}")
    header = MAGIC + bytes([array.ndim]) + np.asarray(array.shape, dtype="<u4").tobytes()
    return header + np.ascontiguousarray(array, dtype="<f4").tobytes()


def write_tensor(t: np.ndarray, sink: BinaryIO) -> int:
    payload = encode_tensor(t)
    header_size = len(MAGIC) + 1 + 4 * np.asarray(t).ndim
    written = 0
    try:
        for chunk in (payload[:header_size], payload[header_size:]):
            sink.write(chunk)
            written += len(chunk)
    except OSError as exc:
        raise TensorWriteError(f"tensor write failed after {written} bytes: {exc}", bytes_written=written) from exc
    return written


def _read_exact(source: BinaryIO, size: int, what: str) -> bytes:
    data = source.read(size)
    if data is None or len(data) < size:
        got = 0 if data is None else len(data)
        raise TensorLengthError(f"truncated {what}: expected {size} bytes, got {got}")
    return data


def read_tensor(source: BinaryIO, *, validate: bool = False) -> np.ndarray:
    magic = source.read(len(MAGIC))
    if magic != MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    rank = _read_exact(source, 1, "rank")[0]
    if rank > MAX_RANK:
        raise TensorFormatError(f"rank {rank} exceeds {MAX_RANK}")
    dims = tuple(int(d) for d in np.frombuffer(_read_exact(source, 4 * rank, "dims"), dtype="<u4"))
    count = math.prod(dims)
    values = np.frombuffer(_read_exact(source, 4 * count, "payload"), dtype="<f4")
    tensor = values.astype(np.float32).reshape(dims)
    if validate and not np.all(np.isfinite(tensor)):
        bad = int(np.count_nonzero(~np.isfinite(tensor)))
        raise TensorDataError(f"tensor holds {bad} non-finite values")
    return tensor


def save_tensor(path: PathLike, t: np.ndarray) -> int:
    with open(path, "wb") as sink:
        return write_tensor(t, sink)


def load_tensor(path: PathLike, *, validate: bool = True) -> np.ndarray:
    with open(path, "rb") as source:
        return read_tensor(source, validate=validate)


# -- scene text ---------------------------------------------------------------


def _floats(tokens: Sequence[str], count: int, key: str, line_no: int) -> List[float]:
    if len(tokens) < count:
        raise SceneSchemaError(key, f"line {line_no}: {key!r} needs {count} values, got {len(tokens)}")
    try:
        values = [float(tok) for tok in tokens[:count]]
    except ValueError as exc:
        raise ValidationError(f"line {line_no}: {key!r} values must be numbers") from exc
    if not all(math.isfinite(v) for v in values):
        raise ValidationError(f"line {line_no}: {key!r} values must be finite")
    return values


def _expect(tokens: Sequence[str], index: int, key: str, line_no: int) -> None:
    if len(tokens) <= index or tokens[index] != key:
        raise SceneSchemaError(key, f"line {line_no}: expected {key!r}")


def _parse_object(tokens: List[str], line_no: int) -> SceneObject:
    # object <class_id> model <path> R <9 floats> t <3 floats> [symmetric]
    if len(tokens) < 2:
        raise SceneSchemaError("class_id", f"line {line_no}: object line lacks a class id")
    try:
        class_id = int(tokens[1])
    except ValueError as exc:
        raise ValidationError(f"line {line_no}: class id must be an integer") from exc
    _expect(tokens, 2, "model", line_no)
    if len(tokens) < 4:
        raise SceneSchemaError("model", f"line {line_no}: model path missing")
    model_ref = tokens[3]
    _expect(tokens, 4, "R", line_no)
    rotation = _floats(tokens[5:], 9, "R", line_no)
    _expect(tokens, 14, "t", line_no)
    translation = _floats(tokens[15:], 3, "t", line_no)
    flags = tokens[18:]
    if any(flag != "symmetric" for flag in flags):
        raise ValidationError(f"line {line_no}: unknown object flags {flags}")
    pose = PoseEstimate(np.array(rotation).reshape(3, 3), np.array(translation))
    return SceneObject(class_id=class_id, pose=pose, model_ref=model_ref, symmetric=bool(flags))


def read_scene(source: str) -> SceneDescription:
    """Parse the key-value scene schema.

    Lines (``#`` starts a comment)::

        image <H> <W>
        camera <fx> <fy> <cx> <cy>
        object <class_id> model <path> R <9 floats row-major> t <3 floats meters> [symmetric]
    """
    image_size = None
    intrinsics = None
    objects: List[SceneObject] = []
    for line_no, raw in enumerate(source.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        key = tokens[0]
        if key == "image":
            height, width = _floats(tokens[1:], 2, "image", line_no)
            if height != int(height) or width != int(width):
                raise ValidationError(f"line {line_no}: image size must be integral")
            image_size = (int(height), int(width))
        elif key == "camera":
            intrinsics = CameraIntrinsics(*_floats(tokens[1:], 4, "camera", line_no))
        elif key == "object":
            objects.append(_parse_object(tokens, line_no))
        else:
            raise ValidationError(f"line {line_no}: unknown key {key!r}")
    if image_size is None:
        raise SceneSchemaError("image")
    if intrinsics is None:
        raise SceneSchemaError("camera")
    return SceneDescription(objects=tuple(objects), intrinsics=intrinsics, image_size=image_size)


def format_float(value: float) -> str:
    return format(float(value), ".17g")


def write_scene(scene: SceneDescription) -> str:
    K = scene.intrinsics
    lines = [
        f"image {scene.image_size[0]} {scene.image_size[1]}",
        "camera " + " ".join(format_float(v) for v in (K.fx, K.fy, K.cx, K.cy)),
    ]
    for obj in sorted(scene.objects, key=lambda o: o.class_id):
        rotation = " ".join(format_float(v) for v in obj.pose.R.reshape(-1))
        translation = " ".join(format_float(v) for v in obj.pose.t)
        line = f"object {obj.class_id} model {obj.model_ref} R {rotation} t {translation}"
        if obj.symmetric:
            line += " symmetric"
        lines.append(line)
    return "\n".join(lines) + "\n"


def load_scene(path: PathLike) -> SceneDescription:
    return read_scene(Path(path).read_text(encoding="utf-8"))


# -- point clouds -------------------------------------------------------------


def read_ply_vertices(text: str) -> np.ndarray:
    """ASCII PLY subset: ``element vertex N`` whose first three properties are x y z."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise TensorFormatError("PLY file must start with 'ply'")
    count = None
    properties: List[str] = []
    in_vertex = False
    body_start = None
    for index, raw in enumerate(lines[1:], start=1):
        tokens = raw.split()
        if not tokens:
            continue
        if tokens[0] in ("format", "element") and len(tokens) < 3:
            raise TensorFormatError(f"PLY header line {index + 1} is incomplete: {raw.strip()!r}")
        if tokens[0] == "format" and tokens[1] != "ascii":
            raise TensorFormatError(f"only ASCII PLY is supported, got {tokens[1]!r}")
        if tokens[0] == "element":
            in_vertex = tokens[1] == "vertex"
            if in_vertex:
                try:
                    count = int(tokens[2])
                except ValueError as exc:
                    raise TensorFormatError(f"PLY vertex count must be an integer, got {tokens[2]!r}") from exc
                if count < 0:
                    raise TensorFormatError(f"PLY vertex count must be non-negative, got {count}")
        elif tokens[0] == "property" and in_vertex:
            properties.append(tokens[-1])
        elif tokens[0] == "end_header":
            body_start = index + 1
            break
    if count is None or body_start is None:
        raise TensorFormatError("PLY header lacks a vertex element or end_header")
    if properties[:3] != ["x", "y", "z"]:
        raise TensorFormatError(f"PLY vertex properties must start with x y z, got {properties[:3]}")
    rows = lines[body_start : body_start + count]
    if len(rows) < count:
        raise TensorLengthError(f"PLY declares {count} vertices but holds {len(rows)}")
    try:
        coordinates = [[float(v) for v in row.split()[:3]] for row in rows]
    except ValueError as exc:
        raise TensorFormatError(f"PLY vertex row is not numeric: {exc}") from exc
    if any(len(c) != 3 for c in coordinates):
        raise TensorFormatError("PLY vertex rows must hold at least x y z")
    return np.array(coordinates, dtype=np.float64).reshape(-1, 3)


def write_ply_vertices(vertices: np.ndarray) -> str:
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    header = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(vertices)}",
        "property float x",
        "property float y",
        "property float z",
        "end_header",
    ]
    body = [" ".join(format_float(v) for v in row) for row in vertices]
    return "\n".join(header + body) + "\n"


def read_point_cloud(path: PathLike) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".ply":
        return read_ply_vertices(path.read_text(encoding="utf-8"))
    cloud = load_tensor(path).astype(np.float64)
    if cloud.ndim != 2 or cloud.shape[1] != 3:
        raise ShapeError(f"point cloud tensor must be N x 3, got {cloud.shape}")
    return cloud

