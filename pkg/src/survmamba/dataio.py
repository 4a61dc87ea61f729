"""On-disk formats and round-trip IO.

Manifest (JSON): {"patients": [{"id", "histology", "genomics",
"time_months", "censored"}], "grouping": path, "bins": optional edges};
paths are relative to the manifest's directory.

Feature-bag (text, .smb): header line "SMB1 <n_groups> <dim>", then per
group a line "<group_id> <n_tokens>" followed by n_tokens lines of dim
space-separated decimal floats. Token order inside a group is the scan
order contract (raster order for patches, catalog order for functions).
Floats are written with repr precision so a save/load round trip is
bit-identical. Genomics files hold one group ("expr") with a single
token whose dim is the gene count.

Checkpoint (binary, .smck): magic "SMCK", uint32 count, then per
parameter uint32 name length, UTF-8 name bytes, uint32 rank, rank uint64
dims, and the little-endian float64 payload.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .data import PatientRecord, SurvivalDataset, finalize_dataset
from .errors import DataError
from .hierarchy import GroupingConfig, HierarchicalBag

BAG_MAGIC = "SMB1"
CKPT_MAGIC = b"SMCK"


def write_feature_bag(path, bag: HierarchicalBag):
    lines = [f"{BAG_MAGIC} {bag.n_groups} {bag.token_dim}"]
    for gid, toks in bag.groups:
        toks = np.asarray(toks, dtype=np.float64)
        lines.append(f"{gid} {toks.shape[0]}")
        for row in toks:
            lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_feature_bag(path, modality: str) -> HierarchicalBag:
    path = Path(path)
    if not path.exists():
        raise DataError(f"feature-bag file not found: {path}")
    lines = path.read_text().splitlines()
    header = lines[0].split()
    if len(header) != 3 or header[0] != BAG_MAGIC:
        raise DataError(f"{path}: bad header {lines[0]!r}, expected '{BAG_MAGIC} <n_groups> <dim>'")
    n_groups, dim = int(header[1]), int(header[2])
    groups = []
    ln = 1
    for _ in range(n_groups):
        gid, n_tok = lines[ln].rsplit(" ", 1)
        n_tok = int(n_tok)
        ln += 1
        toks = np.empty((n_tok, dim))
        for r in range(n_tok):
            vals = lines[ln].split()
            if len(vals) != dim:
                raise DataError(f"{path}: group {gid!r} row {r} has {len(vals)} values, expected {dim}")
            toks[r] = [float(v) for v in vals]
            ln += 1
        groups.append((gid, toks))
    return HierarchicalBag(modality=modality, groups=groups)


def write_grouping(path, grouping: GroupingConfig):
    Path(path).write_text(json.dumps(grouping.to_dict(), indent=1) + "\n")


def read_grouping(path) -> GroupingConfig:
    path = Path(path)
    if not path.exists():
        raise DataError(f"grouping config not found: {path}")
    return GroupingConfig.from_dict(json.loads(path.read_text()))


def save_dataset(dataset: SurvivalDataset, out_dir) -> Path:
    """Write manifest + grouping + per-patient bag files; returns the
    manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "patients").mkdir(parents=True, exist_ok=True)
    write_grouping(out_dir / "grouping.json", dataset.grouping)
    patients = []
    for rec in dataset.records:
        hist_rel = f"patients/{rec.patient_id}.hist.smb"
        gen_rel = f"patients/{rec.patient_id}.gen.smb"
        write_feature_bag(out_dir / hist_rel, rec.histology)
        gen_bag = HierarchicalBag(modality="genomics", groups=[("expr", rec.genomics[None, :])])
        write_feature_bag(out_dir / gen_rel, gen_bag)
        patients.append(
            {
                "id": rec.patient_id,
                "histology": hist_rel,
                "genomics": gen_rel,
                "time_months": rec.time_months,
                "censored": rec.censored,
            }
        )
    manifest = {
        "patients": patients,
        "grouping": "grouping.json",
        "bins": [float(e) for e in dataset.bin_edges],
    }
    mpath = out_dir / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=1) + "\n")
    return mpath


def load_dataset(manifest_path, t_bins: int = 4) -> SurvivalDataset:
    """Parse a manifest, load every referenced file, validate shapes
    against the grouping config. Folds are recomputed from manifest
    order; bins come from the manifest when present."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise DataError(f"manifest not found: {manifest_path}")
    base = manifest_path.parent
    doc = json.loads(manifest_path.read_text())
    grouping = read_grouping(base / doc["grouping"])
    n_genes_needed = grouping.n_genes

    records = []
    for p in doc["patients"]:
        pid = p["id"]
        hist = read_feature_bag(base / p["histology"], "histology")
        gen_bag = read_feature_bag(base / p["genomics"], "genomics")
        if gen_bag.n_groups != 1 or np.asarray(gen_bag.groups[0][1]).shape[0] != 1:
            raise DataError(f"patient {pid}: genomics file must hold one group with one token")
        expr = np.asarray(gen_bag.groups[0][1])[0]
        if expr.shape[0] < n_genes_needed:
            raise DataError(
                f"patient {pid}: expression vector has {expr.shape[0]} genes, "
                f"grouping needs {n_genes_needed}"
            )
        records.append(
            PatientRecord(
                patient_id=pid,
                histology=hist,
                genomics=expr,
                time_months=float(p["time_months"]),
                censored=int(p["censored"]),
            )
        )
    bins = doc.get("bins")
    return finalize_dataset(records, grouping, bin_edges=bins, t_bins=t_bins)


# -- model checkpoints --------------------------------------------------------


def save_checkpoint(model, path):
    params = list(model.named_parameters())
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", len(params)))
        for name, p in params:
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", p.data.ndim))
            fh.write(struct.pack(f"<{p.data.ndim}Q", *p.data.shape))
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint_arrays(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if blob[:4] != CKPT_MAGIC:
        raise DataError(f"{path}: bad checkpoint magic {blob[:4]!r}")
    off = 4
    (count,) = struct.unpack_from("<I", blob, off)
    off += 4
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off : off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<I", blob, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}Q", blob, off)
        off += 8 * rank
        size = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f8", count=size, offset=off).reshape(dims)
        off += 8 * size
        out[name] = arr.astype(np.float64)
    return out


def load_checkpoint(model, path):
    arrays = load_checkpoint_arrays(path)
    own = dict(model.named_parameters())
    if set(arrays) != set(own):
        missing = sorted(set(own) - set(arrays))[:3]
        extra = sorted(set(arrays) - set(own))[:3]
        raise DataError(f"checkpoint/model mismatch; missing={missing} extra={extra}")
    for name, p in own.items():
        if arrays[name].shape != p.data.shape:
            raise DataError(f"checkpoint {name}: shape {arrays[name].shape} != model {p.data.shape}")
        p.data[...] = arrays[name]
