"""Discretization of searched alpha and the genotype file format.

Discretization: on every edge, take the candidate op with the largest
softmax weight (the zero op excluded by default); for every intermediate
node, keep the two incoming edges whose selected op is strongest. Ties
break deterministically toward the lower op index, then the lower source
node, so repeated sweeps produce identical genotypes.

File format (version 1)::

    version: 1
    meta:
      num_cells: 4
      init_channels: 16
      nodes: 3
      source_seed: 0
      search_config_hash: <hex or ->
    normal:
      node 2: (sep_conv_3x3, 0), (skip_connect, 1)
      ...
    reduce:
      node 2: (max_pool_3x3, 0), (sep_conv_5x5, 1)
      ...
    concat: [2, 3, 4]
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import torch

from .errors import ContractError, GenotypeParseError, GenotypeVersionError
from .ops import OpKind
from .searchspace import ArchitectureParams

FORMAT_VERSION = 1
META_FIELDS = ("num_cells", "init_channels", "nodes", "source_seed", "search_config_hash")


@dataclass
class Genotype:
    """A discrete architecture: per-node (op, source) picks for both cell kinds."""

    normal: list  # one entry per intermediate node: [(OpKind, from), (OpKind, from)]
    reduce: list
    concat: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for kind_name, picks in (("normal", self.normal), ("reduce", self.reduce)):
            for t, pairs in enumerate(picks):
                j = t + 2
                if len(pairs) != 2:
                    raise ContractError(
                        f"{kind_name} node {j} has {len(pairs)} inputs, expected 2"
                    )
                for op, src in pairs:
                    op = OpKind(op)
                    if op is OpKind.ZERO:
                        raise ContractError(f"zero op selected at {kind_name} node {j}")
                    if not 0 <= src < j:
                        raise ContractError(
                            f"{kind_name} node {j} references source {src}"
                        )

    @property
    def num_nodes(self) -> int:
        return len(self.normal)


def skip_fraction(g: Genotype) -> float:
    """Share of all selected ops that are skip connections."""
    picks = [op for picks in (g.normal, g.reduce) for pairs in picks for op, _ in pairs]
    if not picks:
        return 0.0
    return sum(1 for op in picks if OpKind(op) is OpKind.SKIP_CONNECT) / len(picks)


def discretize(arch: ArchitectureParams, include_zero: bool = False,
               meta: dict | None = None) -> Genotype:
    """Pick the strongest op per edge, then the two strongest edges per node."""
    meta = dict(meta or {})
    ops = arch.ops
    allowed = [k for k, op in enumerate(ops) if include_zero or op is not OpKind.ZERO]
    if not allowed:
        raise ContractError("no selectable operations outside the zero op")
    cells = {}
    for kind in ArchitectureParams.KINDS:
        weights = arch.softmax_weights(kind).detach().to(torch.float64)
        picks = []
        offset = 0
        for t in range(arch.num_intermediate_nodes):
            j = t + 2
            candidates = []
            for i in range(j):
                w_edge = weights[offset + i]
                # argmax over allowed ops; ties -> lower op index
                best_k = max(allowed, key=lambda k: (w_edge[k].item(), -k))
                candidates.append((w_edge[best_k].item(), i, ops[best_k]))
            offset += j
            # top two edges by strength; ties -> lower source node
            candidates.sort(key=lambda c: (-c[0], c[1]))
            picks.append([(op, i) for _, i, op in candidates[:2]])
        cells[kind] = picks
    concat = list(range(2, 2 + arch.num_intermediate_nodes))
    return Genotype(normal=cells["normal"], reduce=cells["reduction"],
                    concat=concat, meta=meta)


def serialize(g: Genotype) -> str:
    lines = [f"version: {FORMAT_VERSION}", "meta:"]
    for name in META_FIELDS:
        lines.append(f"  {name}: {g.meta.get(name, '-')}")
    for block, picks in (("normal", g.normal), ("reduce", g.reduce)):
        lines.append(f"{block}:")
        for t, pairs in enumerate(picks):
            body = ", ".join(f"({OpKind(op).value}, {src})" for op, src in pairs)
            lines.append(f"  node {t + 2}: {body}")
    lines.append("concat: [" + ", ".join(str(j) for j in g.concat) + "]")
    return "\n".join(lines) + "\n"


_NODE_RE = re.compile(r"^node (\d+): (.+)$")
_PAIR_RE = re.compile(r"^\((\w+), (\d+)\)$")


def parse(text: str) -> Genotype:
    """Parse a serialized genotype; errors carry line numbers."""
    lines = [(n + 1, raw) for n, raw in enumerate(text.splitlines())
             if raw.strip() and not raw.strip().startswith("#")]
    if not lines:
        raise GenotypeParseError("empty genotype document")

    def fail(lineno, msg):
        raise GenotypeParseError(f"line {lineno}: {msg}")

    pos = 0

    def take():
        nonlocal pos
        if pos >= len(lines):
            raise GenotypeParseError("unexpected end of genotype document")
        item = lines[pos]
        pos += 1
        return item

    lineno, line = take()
    m = re.match(r"^version:\s*(\S+)$", line.strip())
    if not m:
        fail(lineno, "expected 'version: <n>' header")
    if m.group(1) != str(FORMAT_VERSION):
        raise GenotypeVersionError(f"unsupported genotype version {m.group(1)!r}")

    lineno, line = take()
    if line.strip() != "meta:":
        fail(lineno, "expected 'meta:' block")
    meta = {}
    for name in META_FIELDS:
        lineno, line = take()
        m = re.match(r"^(\w+):\s*(.*)$", line.strip())
        if not m or m.group(1) != name:
            fail(lineno, f"expected meta field {name!r}")
        raw = m.group(2)
        if name != "search_config_hash":
            try:
                meta[name] = int(raw)
            except ValueError:
                fail(lineno, f"meta field {name!r} must be an integer, got {raw!r}")
        else:
            meta[name] = raw

    blocks = {}
    for block in ("normal", "reduce"):
        lineno, line = take()
        if line.strip() != f"{block}:":
            fail(lineno, f"expected '{block}:' block")
        picks = []
        while pos < len(lines):
            lineno, line = lines[pos]
            m = _NODE_RE.match(line.strip())
            if not m:
                break
            pos += 1
            node = int(m.group(1))
            if node != len(picks) + 2:
                fail(lineno, f"expected node {len(picks) + 2}, found node {node}")
            pairs = []
            for chunk in m.group(2).split("), ("):
                chunk = chunk.strip()
                if not chunk.startswith("("):
                    chunk = "(" + chunk
                if not chunk.endswith(")"):
                    chunk = chunk + ")"
                pm = _PAIR_RE.match(chunk)
                if not pm:
                    fail(lineno, f"malformed (op, from) pair {chunk!r}")
                op_name, src = pm.group(1), int(pm.group(2))
                try:
                    op = OpKind(op_name)
                except ValueError:
                    fail(lineno, f"invalid operation name {op_name!r}")
                pairs.append((op, src))
            if len(pairs) != 2:
                fail(lineno, f"node {node} lists {len(pairs)} inputs, expected 2")
            picks.append(pairs)
        if not picks:
            fail(lineno, f"block '{block}:' lists no nodes")
        blocks[block] = picks

    lineno, line = take()
    m = re.match(r"^concat:\s*\[([\d,\s]*)\]$", line.strip())
    if not m:
        fail(lineno, "expected 'concat: [j, ...]' line")
    concat = [int(tok) for tok in m.group(1).split(",") if tok.strip()]
    if pos < len(lines):
        fail(lines[pos][0], f"unexpected trailing content {lines[pos][1].strip()!r}")
    try:
        return Genotype(normal=blocks["normal"], reduce=blocks["reduce"],
                        concat=concat, meta=meta)
    except ContractError as exc:
        raise GenotypeParseError(str(exc)) from exc


def render(g: Genotype) -> str:
    """Emit DOT graphs (one digraph per cell kind) for visualization."""
    chunks = []
    for name, picks in (("normal", g.normal), ("reduce", g.reduce)):
        lines = [f"digraph {name} {{", "  rankdir=LR;"]
        lines.append('  in0 [label="input 0", shape=box];')
        lines.append('  in1 [label="input 1", shape=box];')
        for t in range(len(picks)):
            lines.append(f'  n{t + 2} [label="node {t + 2}"];')
        lines.append('  out [label="output", shape=box];')

        def vertex(i):
            return f"in{i}" if i < 2 else f"n{i}"

        for t, pairs in enumerate(picks):
            for op, src in pairs:
                lines.append(f'  {vertex(src)} -> n{t + 2} [label="{OpKind(op).value}"];')
        for j in g.concat:
            lines.append(f"  n{j} -> out;")
        lines.append("}")
        chunks.append("\n".join(lines))
    return "\n\n".join(chunks) + "\n"
