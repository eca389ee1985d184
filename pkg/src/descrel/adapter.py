"""Cross-attention adapter over frozen region features.

One direction of the adapter treats one region's patch embeddings as queries
(after a down-projection) and the other region's patch embeddings as keys and
values at full width:

    down   = patches_q @ W_down                           (M, d)
    attn   = sum_h softmax(down W_q^h (patches_kv W_k^h)^T / sqrt(dh))
                    (patches_kv W_v^h) W_o^h              (M, a)
    normed = LayerNorm(attn)                              (M, a)
    up     = normed @ W_up                                (M, D)
    fused  = concat(up, marker_rows) @ W_fuse + b_fuse    (M, D)
    rows   = fused + cls_q                                (M, D)
    out    = column mean of rows                          (D,)

The residual is the query region's CLS embedding; the marker row tells the
adapter which role (subject or object) the query region plays. The full
forward averages the subject-queries-object and object-queries-subject
directions.

All steps go through the taped tensor ops, so the same code path serves
inference (no tape) and training (tape active).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .containers import CKPT_MAGIC, read_blob, read_json, write_blob, write_json
from .errors import (ConfigError, DimensionError, FormatError, ValidationError)
from .tensor import Tensor

CKPT_VERSION = 1
CKPT_MANIFEST = "ckpt.json"
CKPT_WEIGHTS = "weights.bin"

# the fusion layer starts at exactly zero, so an untrained adapter returns
# the averaged CLS residual and the learned branch grows from nothing
FUSE_INIT_SCALE = 0.0

UNIT_NORM_TOL = 1e-4


@dataclass(frozen=True)
class AdapterDims:
    feature_dim: int = 512
    down_dim: int = 64
    attn_dim: int = 256
    heads: int = 8

    def __post_init__(self):
        for name in ("feature_dim", "down_dim", "attn_dim", "heads"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive int, got {v!r}")
        if self.attn_dim % self.heads != 0:
            raise ConfigError(
                f"heads ({self.heads}) must divide attn_dim ({self.attn_dim})")

    @property
    def head_dim(self) -> int:
        return self.attn_dim // self.heads


@dataclass(frozen=True)
class RegionFeatures:
    """CLS embedding (D,) plus M patch embeddings (M, D) for one region."""
    cls: np.ndarray
    patches: np.ndarray

    def __post_init__(self):
        cls = np.asarray(self.cls)
        patches = np.asarray(self.patches)
        if cls.ndim != 1:
            raise DimensionError(f"cls must be a vector, got {cls.shape}")
        if patches.ndim != 2 or patches.shape[1] != cls.shape[0]:
            raise DimensionError(
                f"patches shape {patches.shape} does not match cls {cls.shape}")
        if patches.shape[0] < 1:
            raise ValidationError("region has zero patch rows")
        if not (np.all(np.isfinite(cls)) and np.all(np.isfinite(patches))):
            raise ValidationError("region features are not finite")
        object.__setattr__(self, "cls", cls)
        object.__setattr__(self, "patches", patches)

    @property
    def dim(self) -> int:
        return self.cls.shape[0]

    @property
    def patch_count(self) -> int:
        return self.patches.shape[0]


@dataclass(frozen=True)
class DirectionalMarkers:
    """Unit-norm text embeddings marking the subject and object roles."""
    subject: np.ndarray
    object: np.ndarray

    def __post_init__(self):
        for name in ("subject", "object"):
            m = np.asarray(getattr(self, name))
            if m.ndim != 1:
                raise DimensionError(f"{name} marker must be a vector, got {m.shape}")
            if not np.all(np.isfinite(m)):
                raise ValidationError(f"{name} marker is not finite")
            norm = float(np.linalg.norm(m.astype(np.float64)))
            if abs(norm - 1.0) > UNIT_NORM_TOL:
                raise ValidationError(
                    f"{name} marker norm {norm:.6f} is not unit "
                    f"(tolerance {UNIT_NORM_TOL})")
            object.__setattr__(self, name, m)

    @property
    def dim(self) -> int:
        return self.subject.shape[0]


@dataclass(frozen=True)
class AdapterParams:
    dims: AdapterDims
    down_proj: Tensor                 # (D, d)
    q_proj: tuple[Tensor, ...]        # per head, (d, dh)
    k_proj: tuple[Tensor, ...]        # per head, (D, dh)
    v_proj: tuple[Tensor, ...]        # per head, (D, dh)
    o_proj: tuple[Tensor, ...]        # per head, (dh, a)
    ln_gain: Tensor                   # (a,)
    ln_bias: Tensor                   # (a,)
    up_proj: Tensor                   # (a, D)
    fuse_weight: Tensor               # (2D, D)
    fuse_bias: Tensor                 # (D,)

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        """Stable (name, tensor) order; defines checkpoint layout."""
        out = [("down_proj", self.down_proj)]
        for h in range(self.dims.heads):
            out.append((f"q_proj_{h}", self.q_proj[h]))
            out.append((f"k_proj_{h}", self.k_proj[h]))
            out.append((f"v_proj_{h}", self.v_proj[h]))
            out.append((f"o_proj_{h}", self.o_proj[h]))
        out.extend([
            ("ln_gain", self.ln_gain),
            ("ln_bias", self.ln_bias),
            ("up_proj", self.up_proj),
            ("fuse_weight", self.fuse_weight),
            ("fuse_bias", self.fuse_bias),
        ])
        return out

    def param_count(self) -> int:
        return sum(t.size for _, t in self.named_tensors())

    def astype(self, dtype) -> "AdapterParams":
        return params_from_arrays(
            self.dims,
            {name: t.numpy().astype(dtype) for name, t in self.named_tensors()})

    @property
    def dtype(self):
        return self.down_proj.dtype


def expected_shapes(dims: AdapterDims) -> dict[str, tuple[int, ...]]:
    d, dd, a, dh = dims.feature_dim, dims.down_dim, dims.attn_dim, dims.head_dim
    shapes: dict[str, tuple[int, ...]] = {"down_proj": (d, dd)}
    for h in range(dims.heads):
        shapes[f"q_proj_{h}"] = (dd, dh)
        shapes[f"k_proj_{h}"] = (d, dh)
        shapes[f"v_proj_{h}"] = (d, dh)
        shapes[f"o_proj_{h}"] = (dh, a)
    shapes.update({
        "ln_gain": (a,), "ln_bias": (a,), "up_proj": (a, d),
        "fuse_weight": (2 * d, d), "fuse_bias": (d,),
    })
    return shapes


def adapter_param_count(dims: AdapterDims) -> int:
    return sum(int(np.prod(s)) for s in expected_shapes(dims).values())


def params_from_arrays(dims: AdapterDims, arrays: dict[str, np.ndarray]) -> AdapterParams:
    shapes = expected_shapes(dims)
    if set(arrays) != set(shapes):
        missing = sorted(set(shapes) - set(arrays))
        extra = sorted(set(arrays) - set(shapes))
        raise ValidationError(
            f"parameter set mismatch: missing {missing}, unexpected {extra}")
    tensors: dict[str, Tensor] = {}
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if arr.shape != shapes[name]:
            raise DimensionError(
                f"tensor {name!r} has shape {arr.shape}, expected {shapes[name]}")
        tensors[name] = Tensor(arr)
    heads = dims.heads
    return AdapterParams(
        dims=dims,
        down_proj=tensors["down_proj"],
        q_proj=tuple(tensors[f"q_proj_{h}"] for h in range(heads)),
        k_proj=tuple(tensors[f"k_proj_{h}"] for h in range(heads)),
        v_proj=tuple(tensors[f"v_proj_{h}"] for h in range(heads)),
        o_proj=tuple(tensors[f"o_proj_{h}"] for h in range(heads)),
        ln_gain=tensors["ln_gain"],
        ln_bias=tensors["ln_bias"],
        up_proj=tensors["up_proj"],
        fuse_weight=tensors["fuse_weight"],
        fuse_bias=tensors["fuse_bias"],
    )


def _xavier(rng: np.random.Generator, shape: tuple[int, int],
            scale: float = 1.0) -> np.ndarray:
    bound = np.sqrt(6.0 / (shape[0] + shape[1])) * scale
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def init_params(dims: AdapterDims, seed: int) -> AdapterParams:
    """Seeded init: uniform Xavier projections, identity LayerNorm, and a
    damped fusion layer so the initial output stays near the CLS residual."""
    rng = np.random.default_rng(seed)
    arrays: dict[str, np.ndarray] = {}
    shapes = expected_shapes(dims)
    arrays["down_proj"] = _xavier(rng, shapes["down_proj"])
    for h in range(dims.heads):
        for kind in ("q", "k", "v", "o"):
            name = f"{kind}_proj_{h}"
            arrays[name] = _xavier(rng, shapes[name])
    arrays["ln_gain"] = np.ones(shapes["ln_gain"], dtype=np.float32)
    arrays["ln_bias"] = np.zeros(shapes["ln_bias"], dtype=np.float32)
    arrays["up_proj"] = _xavier(rng, shapes["up_proj"])
    arrays["fuse_weight"] = _xavier(rng, shapes["fuse_weight"], scale=FUSE_INIT_SCALE)
    arrays["fuse_bias"] = np.zeros(shapes["fuse_bias"], dtype=np.float32)
    return params_from_arrays(dims, arrays)


def _check_region(region: RegionFeatures, dims: AdapterDims, label: str) -> None:
    if region.dim != dims.feature_dim:
        raise DimensionError(
            f"{label} region width {region.dim} does not match adapter "
            f"feature_dim {dims.feature_dim}")


def fuse_one_direction(query: RegionFeatures, kv: RegionFeatures,
                       marker: np.ndarray, params: AdapterParams) -> Tensor:
    """One direction: query patches attend over kv patches. Returns (D,)."""
    dims = params.dims
    _check_region(query, dims, "query")
    _check_region(kv, dims, "kv")
    marker = np.asarray(marker)
    if marker.shape != (dims.feature_dim,):
        raise DimensionError(
            f"marker shape {marker.shape} does not match ({dims.feature_dim},)")
    dtype = params.dtype
    q_patches = Tensor(query.patches, dtype=dtype)
    kv_patches = Tensor(kv.patches, dtype=dtype)
    m = query.patch_count

    down = T.matmul(q_patches, params.down_proj)
    inv_sqrt = 1.0 / np.sqrt(dims.head_dim)
    attn_out = None
    for h in range(dims.heads):
        qh = T.matmul(down, params.q_proj[h])
        kh = T.matmul(kv_patches, params.k_proj[h])
        vh = T.matmul(kv_patches, params.v_proj[h])
        weights = T.softmax_rows(T.scale(T.matmul(qh, T.transpose(kh)), inv_sqrt))
        head = T.matmul(T.matmul(weights, vh), params.o_proj[h])
        attn_out = head if attn_out is None else T.add(attn_out, head)

    normed = T.layer_norm(attn_out, params.ln_gain, params.ln_bias)
    up = T.matmul(normed, params.up_proj)
    marker_rows = T.broadcast_rows(Tensor(marker, dtype=dtype), m)
    fused = T.add_row(T.matmul(T.concat_cols(up, marker_rows), params.fuse_weight),
                      params.fuse_bias)
    rows = T.add_row(fused, Tensor(query.cls, dtype=dtype))
    return T.mean_rows(rows)


def embed_pair(subject: RegionFeatures, obj: RegionFeatures,
               markers: DirectionalMarkers, params: AdapterParams) -> Tensor:
    """Average of both directions. Returns the pair embedding, shape (D,)."""
    if markers.dim != params.dims.feature_dim:
        raise DimensionError(
            f"marker width {markers.dim} does not match adapter feature_dim "
            f"{params.dims.feature_dim}")
    v_so = fuse_one_direction(subject, obj, markers.subject, params)
    v_os = fuse_one_direction(obj, subject, markers.object, params)
    return T.scale(T.add(v_so, v_os), 0.5)


# ---------------------------------------------------------------- checkpoints

def save_checkpoint(params: AdapterParams, path: str | Path,
                    meta: dict | None = None) -> None:
    """Write ckpt.json + weights.bin. Weights are stored float32 in
    named_tensors() order; the manifest records name, offset (in floats)
    and shape for each tensor."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    chunks = []
    offset = 0
    for name, t in params.named_tensors():
        arr = t.numpy().astype(np.float32)
        entries.append({"name": name, "offset": offset, "shape": list(arr.shape)})
        chunks.append(arr.reshape(-1))
        offset += arr.size
    flat = np.concatenate(chunks) if chunks else np.zeros(0, np.float32)
    dims = params.dims
    manifest = {
        "version": CKPT_VERSION,
        "dims": {"feature_dim": dims.feature_dim, "down_dim": dims.down_dim,
                 "attn_dim": dims.attn_dim, "heads": dims.heads},
        "param_count": int(flat.size),
        "tensors": entries,
        "meta": dict(meta or {}),
    }
    write_json(out / CKPT_MANIFEST, manifest)
    write_blob(out / CKPT_WEIGHTS, CKPT_MAGIC, flat.size, dims.feature_dim, flat)


def load_checkpoint(path: str | Path) -> tuple[AdapterParams, dict]:
    """Read a checkpoint directory back into float32 params plus its meta."""
    root = Path(path)
    manifest = read_json(root / CKPT_MANIFEST)
    if not isinstance(manifest, dict) or manifest.get("version") != CKPT_VERSION:
        raise FormatError(
            f"unsupported checkpoint version {manifest.get('version')!r}"
            if isinstance(manifest, dict) else "manifest is not an object",
            path=str(root / CKPT_MANIFEST))
    try:
        d = manifest["dims"]
        dims = AdapterDims(int(d["feature_dim"]), int(d["down_dim"]),
                           int(d["attn_dim"]), int(d["heads"]))
        entries = manifest["tensors"]
        total = int(manifest["param_count"])
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"manifest missing or mistyped field: {e}",
                          path=str(root / CKPT_MANIFEST)) from None
    count, blob_dim, flat = read_blob(root / CKPT_WEIGHTS, CKPT_MAGIC,
                                      expected_floats=total)
    if count != total:
        raise FormatError(
            f"blob header count {count} but manifest says {total} floats",
            path=str(root / CKPT_WEIGHTS), offset=8)
    if blob_dim != dims.feature_dim:
        raise FormatError(
            f"blob header dim {blob_dim} but manifest says {dims.feature_dim}",
            path=str(root / CKPT_WEIGHTS), offset=12)

    arrays: dict[str, np.ndarray] = {}
    cursor = 0
    for entry in entries:
        try:
            name = entry["name"]
            offset = int(entry["offset"])
            shape = tuple(int(s) for s in entry["shape"])
        except (KeyError, TypeError, ValueError):
            raise FormatError("malformed tensor entry in manifest",
                              path=str(root / CKPT_MANIFEST)) from None
        size = int(np.prod(shape)) if shape else 1
        if offset != cursor:
            raise FormatError(
                f"tensor {name!r} at float offset {offset}, expected {cursor} "
                f"(tensors must tile the payload)",
                path=str(root / CKPT_WEIGHTS), offset=16 + 4 * cursor)
        if offset + size > flat.size:
            raise FormatError(
                f"tensor {name!r} overruns payload "
                f"({offset}+{size} > {flat.size} floats)",
                path=str(root / CKPT_WEIGHTS), offset=16 + 4 * offset)
        arrays[name] = flat[offset:offset + size].reshape(shape)
        cursor += size
    if cursor != flat.size:
        raise FormatError(
            f"tensors cover {cursor} floats but payload holds {flat.size}",
            path=str(root / CKPT_WEIGHTS), offset=16 + 4 * cursor)
    return params_from_arrays(dims, arrays), dict(manifest.get("meta", {}))


def checkpoint_id(path: str | Path) -> str:
    """Short content hash of the weight bytes (12 hex chars)."""
    blob = Path(path) / CKPT_WEIGHTS
    if not blob.is_file():
        raise FormatError("missing blob", path=str(blob))
    return hashlib.sha256(blob.read_bytes()).hexdigest()[:12]
