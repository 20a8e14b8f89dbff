"""Single-file model bundle: fitted encoder, GAN parameters, loss history, config.

Layout (all integers little-endian)::

    b"TBAG"            magic
    u32                format version
    u64                header length in bytes
    header             UTF-8 JSON, sorted keys; lists every array (name, shape)
    payload            the arrays in header order as '<f8', C order
    32 bytes           SHA-256 of everything above

Writing is deterministic, so save -> load -> save gives identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig, parse_config
from .gan import GanModel, LossHistory
from .preprocess import ColumnNormalizer, ColumnSlot, GmmColumnModel, MinMaxParams, TableEncoder

MAGIC = b"TBAG"
VERSION = 1
_DIGEST = 32


class BundleError(ValueError):
    pass


class ChecksumError(BundleError):
    pass


class VersionError(BundleError):
    pass


@dataclass
class ModelBundle:
    encoder: TableEncoder
    model: GanModel
    history: LossHistory
    config: RunConfig
    version: int = VERSION


def _pack(bundle: ModelBundle) -> tuple[dict, list[tuple[str, np.ndarray]]]:
    arrays: list[tuple[str, np.ndarray]] = []
    columns = []
    for j, n in enumerate(bundle.encoder.normalizers):
        arrays.append((f"col{j}.minmax", np.array([n.minmax.min, n.minmax.max])))
        col = {"name": n.name, "encoding": n.encoding, "scale_before_gmm": n.scale_before_gmm}
        if n.gmm is not None:
            col["gmm_iterations"] = n.gmm.n_iter
            for part in ("weights", "means", "variances"):
                arrays.append((f"col{j}.gmm.{part}", getattr(n.gmm, part)))
            arrays.append((f"col{j}.gmm.log_likelihood", np.asarray(n.gmm.log_likelihood, dtype=np.float64)))
        columns.append(col)
    m = bundle.model
    for i, p in enumerate(m.generator):
        arrays.append((f"generator.{i}", p))
    for i, p in enumerate(m.discriminator):
        arrays.append((f"discriminator.{i}", p))
    h = bundle.history
    arrays.append(("history.generator", np.asarray(h.generator, dtype=np.float64)))
    arrays.append(("history.discriminator", np.asarray(h.discriminator, dtype=np.float64)))
    header = {
        "columns": columns,
        "model": {
            "latent_dim": m.latent_dim,
            "temperature": m.temperature,
            "d_activation": m.d_activation,
            "pac": m.pac,
            "layout": [[s.name, s.scalar, s.block_start, s.block_width] for s in m.layout],
            "generator_layers": len(m.generator),
            "discriminator_layers": len(m.discriminator),
        },
        "history": {"stop_epoch": h.stop_epoch, "best_epoch": h.best_epoch},
        "config": bundle.config.to_text(),
        "arrays": [{"name": name, "shape": list(np.shape(a))} for name, a in arrays],
    }
    return header, arrays


def to_bytes(bundle: ModelBundle) -> bytes:
    header, arrays = _pack(bundle)
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<IQ", VERSION, len(head)), head]
    parts += [np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in arrays]
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def save_model(bundle: ModelBundle, path) -> None:
    Path(path).write_bytes(to_bytes(bundle))


def from_bytes(data: bytes) -> ModelBundle:
    """Decode a bundle; nothing is returned unless every check passes."""
    fixed = len(MAGIC) + 12
    if len(data) < fixed + _DIGEST:
        raise ChecksumError("file too short to be a model bundle")
    if data[:4] != MAGIC:
        raise BundleError("not a model bundle (bad magic bytes)")
    body, digest = data[:-_DIGEST], data[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError("checksum mismatch: bundle is truncated or corrupted")
    version, head_len = struct.unpack("<IQ", body[4:fixed])
    if version != VERSION:
        raise VersionError(f"unsupported bundle version {version} (this build reads version {VERSION})")
    try:
        header = json.loads(body[fixed:fixed + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BundleError(f"unreadable bundle header: {exc}") from None

    arrays = {}
    pos = fixed + head_len
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if pos + nbytes > len(body):
            raise BundleError(f"payload ends before array {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(body, dtype="<f8", count=nbytes // 8, offset=pos).reshape(shape).astype(np.float64)
        pos += nbytes
    if pos != len(body):
        raise BundleError("trailing bytes after the last array")

    normalizers = []
    for j, col in enumerate(header["columns"]):
        lo, hi = arrays[f"col{j}.minmax"]
        gmm = None
        if f"col{j}.gmm.weights" in arrays:
            gmm = GmmColumnModel(arrays[f"col{j}.gmm.weights"], arrays[f"col{j}.gmm.means"],
                                 arrays[f"col{j}.gmm.variances"],
                                 arrays[f"col{j}.gmm.log_likelihood"].tolist(), col["gmm_iterations"])
        normalizers.append(ColumnNormalizer(col["name"], col["encoding"], MinMaxParams(float(lo), float(hi)),
                                            gmm, col["scale_before_gmm"]))
    mh = header["model"]
    model = GanModel(
        [arrays[f"generator.{i}"] for i in range(mh["generator_layers"])],
        [arrays[f"discriminator.{i}"] for i in range(mh["discriminator_layers"])],
        mh["latent_dim"],
        [ColumnSlot(*s) for s in mh["layout"]],
        mh["temperature"],
        mh["d_activation"],
        mh["pac"],
    )
    model.check()
    history = LossHistory(arrays["history.generator"].tolist(), arrays["history.discriminator"].tolist(),
                          header["history"]["stop_epoch"], header["history"]["best_epoch"])
    config = parse_config(header["config"], origin="<bundle config>", check_paths=False)
    encoder = TableEncoder(normalizers)
    if encoder.layout != model.layout:
        raise BundleError("encoder layout does not match the generator output layout")
    return ModelBundle(encoder, model, history, config, version)


def load_model(path) -> ModelBundle:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such model bundle: {path}")
    return from_bytes(path.read_bytes())


def describe(bundle: ModelBundle) -> str:
    """Human-readable summary for ``model inspect``."""
    m, h = bundle.model, bundle.history
    gen_dims = [m.latent_dim] + [w.shape[1] for w in m.generator[::2]]
    disc_dims = [m.discriminator[0].shape[0]] + [w.shape[1] for w in m.discriminator[::2]]
    n_params = sum(p.size for p in m.generator) + sum(p.size for p in m.discriminator)
    lines = [
        f"bundle version: {bundle.version}",
        f"columns: {len(bundle.encoder.normalizers)} (encoded width {bundle.encoder.width})",
    ]
    for n in bundle.encoder.normalizers:
        detail = f"{n.gmm.n_components} modes" if n.gmm is not None else "min-max"
        lines.append(f"  {n.name}: {detail}, range [{n.minmax.min:g}, {n.minmax.max:g}]")
    lines += [
        f"generator: {' -> '.join(map(str, gen_dims))}",
        f"discriminator: {' -> '.join(map(str, disc_dims))} (pac {m.pac}, {m.d_activation})",
        f"parameters: {n_params}",
        f"temperature: {m.temperature:g}",
        f"training: {h.stop_epoch} epochs, best epoch {h.best_epoch}",
    ]
    if len(h):
        lines.append(f"final losses: G {h.generator[-1]:.4f}, D {h.discriminator[-1]:.4f}")
    lines.append(f"seed: {bundle.config.seed}")
    return "\n".join(lines)
