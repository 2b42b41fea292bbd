"""Mixed edges, cell DAGs, and supernet assembly.

A cell is a complete DAG over two input nodes and ``num_intermediate_nodes``
intermediates; the output node concatenates all intermediates. Edges are
flattened node-major: for intermediate t (graph node j = t + 2) the sources
run i = 0..j-1, so a cell with n intermediates has E = sum_{t}(t + 2) edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
from torch import nn

from .errors import ConfigError, NumericError, ShapeError
from .ops import ALL_OPS, OpKind, FactorizedReduce, ReLUConvBN, make_op


def edge_list(num_intermediate_nodes: int):
    """Flattened (source, target) pairs of the complete cell DAG."""
    edges = []
    for t in range(num_intermediate_nodes):
        j = t + 2
        for i in range(j):
            edges.append((i, j))
    return edges


def num_edges(num_intermediate_nodes: int) -> int:
    return sum(t + 2 for t in range(num_intermediate_nodes))


@dataclass(frozen=True)
class CellSpec:
    """Topology of one cell before discretization."""

    num_intermediate_nodes: int
    cell_kind: str  # "normal" | "reduction"
    channels: int
    edges: tuple = field(default=None)

    def __post_init__(self):
        if self.num_intermediate_nodes < 1:
            raise ConfigError("a cell needs at least one intermediate node")
        if self.cell_kind not in ("normal", "reduction"):
            raise ConfigError(f"unknown cell kind {self.cell_kind!r}")
        if self.channels < 1:
            raise ConfigError("channels must be positive")
        if self.edges is None:
            object.__setattr__(self, "edges", tuple(edge_list(self.num_intermediate_nodes)))

    @property
    def num_nodes(self) -> int:
        # two inputs + intermediates + one output
        return 2 + self.num_intermediate_nodes + 1


def default_reduction_positions(num_cells: int) -> frozenset:
    return frozenset({num_cells // 3, (2 * num_cells) // 3})


@dataclass(frozen=True)
class SupernetSpec:
    """Macro network: stem, cell stack, classifier."""

    num_cells: int
    init_channels: int
    num_classes: int
    label_mode: str = "single_label"
    stem: str = "tiny"  # "tiny": stride-1 conv; "patch": two stride-2 convs
    reduction_positions: frozenset = None
    ops: tuple = ALL_OPS
    stem_multiplier: int = 3

    def __post_init__(self):
        if self.num_cells < 1:
            raise ConfigError("num_cells must be at least 1")
        if self.init_channels < 1:
            raise ConfigError("init_channels must be positive")
        if self.num_classes < 1:
            raise ConfigError("num_classes must be positive")
        if self.label_mode not in ("single_label", "multi_label"):
            raise ConfigError(f"unknown label mode {self.label_mode!r}")
        if self.stem not in ("tiny", "patch"):
            raise ConfigError(f"unknown stem kind {self.stem!r}")
        if self.reduction_positions is None:
            object.__setattr__(
                self, "reduction_positions", default_reduction_positions(self.num_cells)
            )
        object.__setattr__(self, "ops", tuple(OpKind(o) for o in self.ops))
        if not self.ops:
            raise ConfigError("operation vocabulary is empty")


class ArchitectureParams:
    """The alpha tensor: one scalar per (cell kind, edge, candidate op).

    Shared across all cells of the same kind. ``alpha[0]`` indexes normal
    cells and ``alpha[1]`` reduction cells.
    """

    KINDS = ("normal", "reduction")

    def __init__(self, alpha: torch.Tensor, num_intermediate_nodes: int, ops=ALL_OPS):
        ops = tuple(OpKind(o) for o in ops)
        expected = (2, num_edges(num_intermediate_nodes), len(ops))
        if tuple(alpha.shape) != expected:
            raise ShapeError(f"alpha shape {tuple(alpha.shape)} != expected {expected}")
        if not torch.isfinite(alpha).all():
            raise NumericError("alpha contains non-finite values")
        self.alpha = alpha
        self.num_intermediate_nodes = num_intermediate_nodes
        self.ops = ops

    def for_kind(self, cell_kind: str) -> torch.Tensor:
        return self.alpha[self.KINDS.index(cell_kind)]

    def parameters(self):
        return [self.alpha]

    def softmax_weights(self, cell_kind: str) -> torch.Tensor:
        """Per-edge mixture weights, shape (E, num_ops)."""
        return torch.softmax(self.for_kind(cell_kind), dim=-1)


def init_alpha(cell_nodes: int, ops=ALL_OPS, seed: int = 0,
               dtype=torch.float32) -> ArchitectureParams:
    """Draw alpha ~ N(0, 1e-3) so the initial mixture is near uniform."""
    if cell_nodes < 1:
        raise ConfigError("cell_nodes must be at least 1")
    gen = torch.Generator().manual_seed(seed)
    shape = (2, num_edges(cell_nodes), len(ops))
    alpha = torch.randn(shape, generator=gen, dtype=dtype) * math.sqrt(1e-3)
    alpha.requires_grad_(True)
    return ArchitectureParams(alpha, cell_nodes, ops)


class MixedEdge(nn.Module):
    """Softmax-weighted sum of all candidate ops on one edge."""

    def __init__(self, channels, stride, ops=ALL_OPS):
        super().__init__()
        self.stride = stride
        self.op_kinds = tuple(OpKind(o) for o in ops)
        self.ops = nn.ModuleList(make_op(k, channels, stride) for k in self.op_kinds)

    def forward(self, x, alpha_edge):
        if not torch.isfinite(alpha_edge).all():
            raise NumericError("non-finite alpha on mixed edge")
        weights = torch.softmax(alpha_edge, dim=-1)
        return sum(w * op(x) for w, op in zip(weights, self.ops))


class SearchCell(nn.Module):
    """One cell of the supernet; every edge is a MixedEdge."""

    def __init__(self, spec: CellSpec, c_prev_prev, c_prev, reduction_prev, ops=ALL_OPS):
        super().__init__()
        self.spec = spec
        c = spec.channels
        self.reduction = spec.cell_kind == "reduction"
        if reduction_prev:
            self.preprocess0 = FactorizedReduce(c_prev_prev, c)
        else:
            self.preprocess0 = ReLUConvBN(c_prev_prev, c, 1, 1, 0)
        self.preprocess1 = ReLUConvBN(c_prev, c, 1, 1, 0)
        self.edges = nn.ModuleList()
        for (i, _j) in spec.edges:
            stride = 2 if self.reduction and i < 2 else 1
            self.edges.append(MixedEdge(c, stride, ops=ops))

    def forward(self, s0, s1, alpha_cell):
        s0 = self.preprocess0(s0)
        s1 = self.preprocess1(s1)
        if s0.shape[2:] != s1.shape[2:]:
            raise ShapeError(
                f"cell inputs disagree spatially after preprocessing: "
                f"{tuple(s0.shape[2:])} vs {tuple(s1.shape[2:])}"
            )
        states = [s0, s1]
        offset = 0
        for t in range(self.spec.num_intermediate_nodes):
            j = t + 2
            node = sum(
                self.edges[offset + i](states[i], alpha_cell[offset + i]) for i in range(j)
            )
            offset += j
            states.append(node)
        return torch.cat(states[2:], dim=1)


def _make_stem(kind: str, c_out: int):
    if kind == "tiny":
        return nn.Sequential(
            nn.Conv2d(3, c_out, 3, padding=1, bias=False),
            nn.BatchNorm2d(c_out),
        )
    # patch stem: two stride-2 convs, shrinks 4x before the cell stack
    return nn.Sequential(
        nn.Conv2d(3, c_out // 2, 3, stride=2, padding=1, bias=False),
        nn.BatchNorm2d(c_out // 2),
        nn.ReLU(inplace=False),
        nn.Conv2d(c_out // 2, c_out, 3, stride=2, padding=1, bias=False),
        nn.BatchNorm2d(c_out),
    )


class Supernet(nn.Module):
    """Stem -> stack of search cells -> global pooling -> classifier."""

    def __init__(self, spec: SupernetSpec, cell_nodes: int):
        super().__init__()
        if cell_nodes < 1:
            raise ConfigError("cell_nodes must be at least 1")
        self.spec = spec
        self.cell_nodes = cell_nodes
        self.arch: ArchitectureParams | None = None

        c_curr = spec.stem_multiplier * spec.init_channels
        self.stem = _make_stem(spec.stem, c_curr)

        c_prev_prev, c_prev, c_curr = c_curr, c_curr, spec.init_channels
        self.cells = nn.ModuleList()
        reduction_prev = False
        for i in range(spec.num_cells):
            if i in spec.reduction_positions:
                c_curr *= 2
                kind = "reduction"
            else:
                kind = "normal"
            cell_spec = CellSpec(cell_nodes, kind, c_curr)
            cell = SearchCell(cell_spec, c_prev_prev, c_prev, reduction_prev, ops=spec.ops)
            self.cells.append(cell)
            reduction_prev = kind == "reduction"
            c_prev_prev, c_prev = c_prev, cell_nodes * c_curr

        self.global_pooling = nn.AdaptiveAvgPool2d(1)
        self.classifier = nn.Linear(c_prev, spec.num_classes)

    def forward(self, x, arch: ArchitectureParams | None = None):
        arch = arch if arch is not None else self.arch
        if arch is None:
            raise ConfigError("no architecture parameters attached or supplied")
        s0 = s1 = self.stem(x)
        for cell in self.cells:
            alpha_cell = arch.for_kind(cell.spec.cell_kind)
            s0, s1 = s1, cell(s0, s1, alpha_cell)
        out = self.global_pooling(s1).flatten(1)
        return self.classifier(out)

    def conv_registry(self):
        """Ordered (layer_id, module) pairs of every conv layer, for probing."""
        registry = []
        for name, module in self.named_modules():
            if isinstance(module, nn.Conv2d):
                registry.append((f"{len(registry)}:{name}", module))
        return registry


def assemble_supernet(spec: SupernetSpec, cell_nodes: int, seed: int | None = None,
                      alpha_seed: int | None = None) -> Supernet:
    """Build a supernet and attach freshly initialized alpha.

    With ``seed`` given, both module weights and alpha are reproducible.
    """
    if seed is not None:
        torch.manual_seed(seed)
    net = Supernet(spec, cell_nodes)
    if alpha_seed is None:
        alpha_seed = seed if seed is not None else 0
    net.arch = init_alpha(cell_nodes, ops=spec.ops, seed=alpha_seed)
    return net
