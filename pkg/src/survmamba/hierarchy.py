"""Two-level bags and the dual-level aggregation pipeline.

Each modality arrives as a hierarchical bag: ordered groups (tissue
regions / biological processes), each holding an ordered run of
fine-grained token rows (patch embeddings / function tokens). Group and
token order are part of the data contract because the scan is
order-sensitive: raster order for regions and patches, catalog order for
processes and functions.

The dual-level pipeline refines tokens inside each group with one shared
bidirectional block (`him_fine`), mean-pools every group to a single
token, and runs a second bidirectional block over the group sequence
(`him_coarse`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blocks import BiMambaBlock
from .errors import ConfigError, DataError, ShapeError
from .numerics import (LinearLayer, Module, Namespace, Tensor, silu, stack,
                       stacked_linear, tmax, tmean, uniform_init)

# full-scale catalog defaults (the synthetic generator uses smaller ones)
DEFAULT_N_PROCESSES = 42
DEFAULT_N_FUNCTIONS = 352


@dataclass
class HierarchicalBag:
    """One modality's two-level bag: ordered (group_id, tokens) pairs.

    tokens are (K_g, D_raw) float64 arrays; every group is non-empty and
    all groups share D_raw.
    """

    modality: str
    groups: list

    def __post_init__(self):
        if not self.groups:
            raise DataError(f"{self.modality} bag has no groups")
        dims = set()
        for gid, toks in self.groups:
            toks = np.asarray(toks, dtype=np.float64)
            if toks.ndim != 2 or toks.shape[0] < 1:
                raise DataError(f"{self.modality} group {gid!r} is empty or not a token matrix")
            dims.add(toks.shape[1])
        if len(dims) != 1:
            raise DataError(f"{self.modality} bag mixes token dims {sorted(dims)}")

    @property
    def token_dim(self) -> int:
        return int(np.asarray(self.groups[0][1]).shape[1])

    @property
    def n_groups(self) -> int:
        return len(self.groups)


@dataclass
class GroupingConfig:
    """Process -> function -> gene-index catalog, in fixed order.

    processes: ordered (process_id, [function_id, ...]); functions:
    ordered (function_id, [gene index, ...]). A gene may belong to
    several functions; every process must list at least one function.
    """

    processes: list
    functions: list
    _fn_index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._fn_index = {fid: genes for fid, genes in self.functions}
        if len(self._fn_index) != len(self.functions):
            raise DataError("grouping: duplicate function ids")
        for pid, fids in self.processes:
            if not fids:
                raise DataError(f"grouping: process {pid!r} lists no functions")
            for fid in fids:
                if fid not in self._fn_index:
                    raise DataError(f"grouping: process {pid!r} references unknown function {fid!r}")

    def genes_of(self, fid: str) -> list:
        return self._fn_index[fid]

    @property
    def n_genes(self) -> int:
        return 1 + max(g for _, genes in self.functions for g in genes)

    def to_dict(self) -> dict:
        return {
            "processes": [{"id": pid, "functions": list(fids)} for pid, fids in self.processes],
            "functions": [{"id": fid, "genes": list(genes)} for fid, genes in self.functions],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroupingConfig":
        return cls(
            processes=[(p["id"], list(p["functions"])) for p in d["processes"]],
            functions=[(f["id"], list(f["genes"])) for f in d["functions"]],
        )


def make_grouping(n_processes: int, functions_per_process: int, genes_per_function: int) -> GroupingConfig:
    """Uniform catalog: consecutive gene blocks, consecutive function blocks."""
    functions = []
    processes = []
    f = 0
    for p in range(n_processes):
        fids = []
        for _ in range(functions_per_process):
            fid = f"F{f:04d}"
            functions.append((fid, list(range(f * genes_per_function, (f + 1) * genes_per_function))))
            fids.append(fid)
            f += 1
        processes.append((f"P{p:03d}", fids))
    return GroupingConfig(processes=processes, functions=functions)


def default_catalog(genes_per_function: int = 8) -> GroupingConfig:
    """Full-scale catalog shape: 42 processes over 352 functions, ragged."""
    base, extra = divmod(DEFAULT_N_FUNCTIONS, DEFAULT_N_PROCESSES)
    functions = []
    processes = []
    f = 0
    for p in range(DEFAULT_N_PROCESSES):
        count = base + (1 if p < extra else 0)
        fids = []
        for _ in range(count):
            fid = f"F{f:04d}"
            functions.append((fid, list(range(f * genes_per_function, (f + 1) * genes_per_function))))
            fids.append(fid)
            f += 1
        processes.append((f"P{p:03d}", fids))
    return GroupingConfig(processes=processes, functions=functions)


class _MlpBank(Module):
    """Stacked two-layer MLPs for all functions sharing one input width.

    Weight tensors carry a leading function axis, so the whole bank runs
    as two batched matmuls; row f is function f's own MLP.
    """

    def __init__(self, n_fns: int, n_in: int, hidden: int, d_out: int, rng):
        super().__init__()
        self.w1 = Tensor(uniform_init(rng, (n_fns, n_in, hidden), n_in), requires_grad=True)
        self.b1 = Tensor(np.zeros((n_fns, hidden)), requires_grad=True)
        self.w2 = Tensor(uniform_init(rng, (n_fns, hidden, d_out), hidden), requires_grad=True)
        self.b2 = Tensor(np.zeros((n_fns, d_out)), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return stacked_linear(silu(stacked_linear(x, self.w1, self.b1)), self.w2, self.b2)


class GenomicsEncoder(Module):
    """Per-function two-layer MLPs producing D-dim tokens, grouped by
    process in catalog order. Functions with equal gene counts share one
    stacked bank (same math, one batched call)."""

    def __init__(self, grouping: GroupingConfig, d_model: int, hidden: int, rng):
        super().__init__()
        self.grouping = grouping
        by_width: dict = {}
        for i, (fid, genes) in enumerate(grouping.functions):
            by_width.setdefault(len(genes), []).append(i)
        self._classes = []  # (width, fn indices, gene index matrix)
        banks = Namespace()
        for w in sorted(by_width):
            idxs = by_width[w]
            bank = _MlpBank(len(idxs), w, hidden, d_model, rng)
            setattr(banks, f"genes{w}", bank)
            gene_idx = np.asarray([grouping.functions[i][1] for i in idxs], dtype=np.int64)
            self._classes.append((w, idxs, gene_idx, bank))
        self.banks = banks
        self._fn_slot = {}  # function position -> (class, row)
        for ci, (_, idxs, _, _) in enumerate(self._classes):
            for row, i in enumerate(idxs):
                self._fn_slot[i] = (ci, row)
        self._fn_pos = {fid: i for i, (fid, _) in enumerate(grouping.functions)}
        self._max_gene = max(g for _, genes in grouping.functions for g in genes)

    def set_function_mlp(self, fid: str, w1, b1, w2, b2):
        """Overwrite one function's MLP weights (test/fixture helper)."""
        ci, row = self._fn_slot[self._fn_pos[fid]]
        bank = self._classes[ci][3]
        bank.w1.data[row] = w1
        bank.b1.data[row] = b1
        bank.w2.data[row] = w2
        bank.b2.data[row] = b2

    def __call__(self, expr: np.ndarray) -> list:
        """expr: 1-d gene expression vector -> [(process_id, Tensor[K_j, D]), ...]."""
        expr = np.asarray(expr, dtype=np.float64)
        if self._max_gene >= expr.shape[0]:
            for fid, genes in self.grouping.functions:
                if max(genes) >= expr.shape[0]:
                    raise DataError(
                        f"genomics: function {fid!r} needs gene index {max(genes)} "
                        f"but expression vector has {expr.shape[0]} genes"
                    )
        class_tokens = [bank(Tensor(expr[gene_idx])) for _, _, gene_idx, bank in self._classes]
        out = []
        for pid, fids in self.grouping.processes:
            rows = []
            for fid in fids:
                ci, row = self._fn_slot[self._fn_pos[fid]]
                rows.append((ci, row))
            if len({ci for ci, _ in rows}) == 1 and _is_contiguous([r for _, r in rows]):
                ci, first = rows[0]
                toks = class_tokens[ci][first : first + len(rows)]
            else:
                toks = stack([class_tokens[ci][r] for ci, r in rows], axis=0)
            out.append((pid, toks))
        return out


def _is_contiguous(rows: list) -> bool:
    return all(b == a + 1 for a, b in zip(rows, rows[1:]))


class HistologyEncoder(Module):
    """Shared linear projection of raw patch embeddings to the token dim."""

    def __init__(self, d_raw: int, d_model: int, rng):
        super().__init__()
        self.proj = LinearLayer(d_raw, d_model, rng)

    def __call__(self, bag: HierarchicalBag) -> list:
        sizes = [np.asarray(t).shape[0] for _, t in bag.groups]
        flat = np.concatenate([np.asarray(t, dtype=np.float64) for _, t in bag.groups], axis=0)
        proj = self.proj(Tensor(flat))
        out = []
        lo = 0
        for (gid, _), k in zip(bag.groups, sizes):
            out.append((gid, proj[lo : lo + k]))
            lo += k
        return out


def encode_genomics(expr, grouping: GroupingConfig, encoder: GenomicsEncoder) -> list:
    return encoder(expr)


def encode_histology(bag: HierarchicalBag, encoder: HistologyEncoder) -> list:
    return encoder(bag)


def him_fine(groups: list, block: BiMambaBlock) -> list:
    """Refine each group's token run with the same shared block.

    Groups are independent, so equal-length groups are batched through a
    single call; results do not depend on the batching (equivariant to
    group reordering).
    """
    by_len: dict = {}
    for i, (_, toks) in enumerate(groups):
        if toks.shape[-1] != block.d_model:
            raise ShapeError(f"him_fine: group token dim {toks.shape} != block dim {block.d_model}")
        by_len.setdefault(toks.shape[0], []).append(i)
    refined: list = [None] * len(groups)
    for k in sorted(by_len):
        idxs = by_len[k]
        batch = stack([groups[i][1] for i in idxs], axis=0)
        out = block(batch)
        for j, i in enumerate(idxs):
            refined[i] = (groups[i][0], out[j])
    return refined


def him_coarse(refined: list, block: BiMambaBlock, pool: str = "mean") -> Tensor:
    """Pool each refined group to one token and mix the group sequence.

    Returns a (G, D) tensor, one row per group, in group order. The
    coarse block sees group order, so this stage is order-sensitive.
    """
    if not refined:
        raise ShapeError("him_coarse: need at least one group")
    if pool == "mean":
        pooled = [tmean(toks, axis=0) for _, toks in refined]
    elif pool == "max":
        pooled = [tmax(toks, axis=0) for _, toks in refined]
    else:
        raise ConfigError(f"him_coarse: unknown pool {pool!r}, expected 'mean' or 'max'")
    seq = stack([stack(pooled, axis=0)], axis=0)  # (1, G, D)
    return block(seq)[0]
