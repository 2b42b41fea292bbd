"""Discretization and genotype format tests, with a brute-force oracle."""

import pytest
import torch

from cellsearch.errors import ContractError, GenotypeParseError, GenotypeVersionError
from cellsearch.genotype import (Genotype, discretize, parse, render, serialize,
                                 skip_fraction)
from cellsearch.ops import ALL_OPS, OpKind
from cellsearch.searchspace import ArchitectureParams, init_alpha, num_edges


def _brute_force(arch):
    """Independent re-derivation of discretize by exhaustive comparison."""
    ops = arch.ops
    out = {}
    for kind in ("normal", "reduction"):
        weights = arch.softmax_weights(kind).detach().double()
        picks = []
        offset = 0
        for t in range(arch.num_intermediate_nodes):
            j = t + 2
            per_edge = []
            for i in range(j):
                best = None
                for k, op in enumerate(ops):
                    if op is OpKind.ZERO:
                        continue
                    w = weights[offset + i, k].item()
                    if best is None or w > best[0]:
                        best = (w, k)
                per_edge.append((best[0], i, ops[best[1]]))
            offset += j
            chosen = sorted(per_edge, key=lambda c: (-c[0], c[1]))[:2]
            picks.append([(op, i) for _, i, op in chosen])
        out[kind] = picks
    return out


def test_discretize_matches_brute_force_on_random_alpha():
    gen = torch.Generator().manual_seed(11)
    for trial in range(200):
        alpha = torch.randn(2, num_edges(3), len(ALL_OPS), generator=gen)
        arch = ArchitectureParams(alpha, 3)
        g = discretize(arch)
        oracle = _brute_force(arch)
        assert g.normal == oracle["normal"], f"trial {trial}"
        assert g.reduce == oracle["reduction"], f"trial {trial}"
        assert g.concat == [2, 3, 4]
        for picks in (g.normal, g.reduce):
            for t, pairs in enumerate(picks):
                assert len(pairs) == 2
                srcs = [s for _, s in pairs]
                assert len(set(srcs)) == 2  # two distinct input edges
                assert all(0 <= s < t + 2 for s in srcs)
                assert all(OpKind(op) is not OpKind.ZERO for op, _ in pairs)


def test_discretize_shift_invariance():
    # softmax is shift invariant, so adding a constant per edge changes nothing
    alpha = torch.randn(2, num_edges(2), len(ALL_OPS),
                        generator=torch.Generator().manual_seed(5))
    g1 = discretize(ArchitectureParams(alpha, 2))
    g2 = discretize(ArchitectureParams(alpha + 3.7, 2))
    assert g1.normal == g2.normal and g1.reduce == g2.reduce


def test_discretize_tie_breaks_deterministically():
    alpha = torch.zeros(2, num_edges(2), len(ALL_OPS))
    g = discretize(ArchitectureParams(alpha, 2))
    # all weights tie: lowest non-zero op index, lowest source nodes
    for picks in (g.normal, g.reduce):
        for t, pairs in enumerate(picks):
            assert pairs == [(OpKind.SEP_CONV_3X3, 0), (OpKind.SEP_CONV_3X3, 1)]


def test_include_zero_flag():
    alpha = torch.zeros(2, num_edges(1), len(ALL_OPS))
    alpha[:, :, ALL_OPS.index(OpKind.ZERO)] = 5.0
    arch = ArchitectureParams(alpha, 1)
    g = discretize(arch)  # zero excluded by default
    assert all(OpKind(op) is not OpKind.ZERO
               for pairs in g.normal for op, _ in pairs)
    with pytest.raises(ContractError):
        discretize(arch, include_zero=True)  # zero would be selected


def test_skip_fraction():
    g = Genotype(
        normal=[[(OpKind.SKIP_CONNECT, 0), (OpKind.SEP_CONV_3X3, 1)]],
        reduce=[[(OpKind.SKIP_CONNECT, 0), (OpKind.SKIP_CONNECT, 1)]],
        concat=[2],
    )
    assert skip_fraction(g) == pytest.approx(0.75)


def test_genotype_invariant_validation():
    with pytest.raises(ContractError):
        Genotype(normal=[[(OpKind.ZERO, 0), (OpKind.SKIP_CONNECT, 1)]],
                 reduce=[[(OpKind.SKIP_CONNECT, 0), (OpKind.SKIP_CONNECT, 1)]],
                 concat=[2])
    with pytest.raises(ContractError):
        Genotype(normal=[[(OpKind.SKIP_CONNECT, 0)]],
                 reduce=[[(OpKind.SKIP_CONNECT, 0), (OpKind.SKIP_CONNECT, 1)]],
                 concat=[2])
    with pytest.raises(ContractError):
        Genotype(normal=[[(OpKind.SKIP_CONNECT, 0), (OpKind.SKIP_CONNECT, 2)]],
                 reduce=[[(OpKind.SKIP_CONNECT, 0), (OpKind.SKIP_CONNECT, 1)]],
                 concat=[2])  # source 2 not before node 2


def _example_genotype():
    meta = {"num_cells": 4, "init_channels": 16, "nodes": 2,
            "source_seed": 0, "search_config_hash": "abc123def456"}
    arch = init_alpha(2, seed=9)
    return discretize(arch, meta=meta)


def test_serialize_parse_round_trip():
    g = _example_genotype()
    text = serialize(g)
    back = parse(text)
    assert back.normal == g.normal
    assert back.reduce == g.reduce
    assert back.concat == g.concat
    assert back.meta == g.meta
    assert serialize(back) == text  # byte-stable


def test_parse_reports_line_numbers_and_bad_ops():
    text = serialize(_example_genotype())
    bad = text.replace("node 2:", "node 2: (conv_7x7, 0),", 1)
    with pytest.raises(GenotypeParseError) as exc:
        parse(bad)
    assert "conv_7x7" in str(exc.value)
    assert "line" in str(exc.value)


def test_parse_version_error():
    text = serialize(_example_genotype()).replace("version: 1", "version: 99")
    with pytest.raises(GenotypeVersionError):
        parse(text)


def test_parse_rejects_malformed_documents():
    with pytest.raises(GenotypeParseError):
        parse("")
    with pytest.raises(GenotypeParseError):
        parse("version: 1\nnot-meta\n")
    good = serialize(_example_genotype())
    with pytest.raises(GenotypeParseError):
        parse(good + "trailing garbage\n")


def test_parse_skips_comments_and_blank_lines():
    text = serialize(_example_genotype())
    noisy = "# a comment\n\n" + text.replace("normal:", "# mid comment\nnormal:")
    assert parse(noisy).normal == parse(text).normal


def test_render_edge_counts():
    g = _example_genotype()
    dot = render(g)
    assert dot.count("digraph") == 2
    # 2 ops per node, 2 nodes, both kinds
    assert dot.count("->") == 2 * 2 * 2 + 2 * len(g.concat)
    for pairs in g.normal:
        for op, _src in pairs:
            assert OpKind(op).value in dot
