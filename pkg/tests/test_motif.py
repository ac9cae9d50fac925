"""Motif catalog, typed counting vs brute force, edge and MxE features."""

import json

import numpy as np
import pytest

from motifscope import etn as etn_mod, motif, storage
from motifscope.etn import EgoTransferNetwork

from oracles import brute_force_motifs, brute_force_motifs_untyped, random_etn


def star_etn(n, direction="out", ntype="A"):
    ego = "0xe"
    node_types = {ego: "E"}
    edges = []
    for i in range(n):
        node = f"0xa{i}"
        node_types[node] = ntype
        if direction == "out":
            edges.append((ego, node, "Cryptocurrency"))
        else:
            edges.append((node, ego, "Cryptocurrency"))
    return EgoTransferNetwork(ego=ego, node_types=node_types, edges=edges)


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------

def test_enumerated_catalog_has_nine_shapes():
    catalog = motif.enumerate_catalog()
    assert len(catalog) == 9
    assert [s.id for s in catalog] == [f"m{i}" for i in range(1, 10)]
    assert sorted(catalog.two_node) == [motif.OUT, motif.IN, motif.RECIP]
    assert len(catalog.three_node) == 6
    assert catalog.by_id["m4"].symmetric and catalog.by_id["m4"].automorphisms == 2
    assert not catalog.by_id["m5"].symmetric


def test_catalog_rejects_isomorphic_duplicates():
    shapes = [
        motif.MotifShape(id="a", states=(motif.OUT, motif.IN)),
        motif.MotifShape(id="b", states=(motif.IN, motif.OUT)),  # same shape, roles swapped
    ]
    with pytest.raises(ValueError):
        motif.MotifCatalog(shapes)


def test_catalog_rejects_oversized_shapes():
    with pytest.raises(ValueError):
        motif.MotifCatalog([motif.MotifShape(id="x", states=(0, 0, 0))])


def test_catalog_json_round_trip(tmp_path):
    catalog = motif.enumerate_catalog()
    path = tmp_path / "catalog.json"
    path.write_text(json.dumps(catalog.to_json()), encoding="utf-8")
    loaded = motif.load_catalog(path)
    assert [(s.id, s.states) for s in loaded] == [(s.id, s.states) for s in catalog]


@pytest.mark.parametrize(
    "entry",
    [
        {"id": "x", "nodes": ["i", "j"], "edges": [["i", "j"]]},  # no ego role
        {"id": "x", "nodes": ["E", "i"], "edges": [["E", "i"], ["E", "i"]]},  # duplicate edge
        {"id": "x", "nodes": ["E", "i", "j"], "edges": [["E", "i"], ["i", "j"]]},  # edge misses E
        {"id": "x", "nodes": ["E", "i", "j"], "edges": [["E", "i"]]},  # j unconnected
        {"id": "x", "nodes": ["E", "i", "j", "k"], "edges": [["E", "i"], ["E", "j"], ["E", "k"]]},
        {"id": "x", "nodes": ["E", "i"], "edges": [["E", "E"]]},  # self loop
    ],
)
def test_load_catalog_validation(tmp_path, entry):
    path = tmp_path / "catalog.json"
    path.write_text(json.dumps([entry]), encoding="utf-8")
    with pytest.raises(ValueError):
        motif.load_catalog(path)


# ---------------------------------------------------------------------------
# counting vs the subset-enumeration oracle
# ---------------------------------------------------------------------------

def test_count_motifs_matches_brute_force_sample(rng):
    catalog = motif.enumerate_catalog()
    for _ in range(200):
        etn = random_etn(rng)
        assert motif.count_motifs(etn, catalog) == brute_force_motifs(etn, catalog)


def test_untyped_counts_match_brute_force(rng):
    catalog = motif.enumerate_catalog()
    for _ in range(50):
        etn = random_etn(rng)
        assert motif.count_motifs_untyped(etn, catalog) == brute_force_motifs_untyped(etn, catalog)


def test_typed_counts_marginalize_to_untyped(rng):
    catalog = motif.enumerate_catalog()
    for _ in range(50):
        etn = random_etn(rng)
        typed = motif.count_motifs(etn, catalog)
        by_shape: dict[str, int] = {}
        for key, count in typed.items():
            sid = key.split("(", 1)[0]
            by_shape[sid] = by_shape.get(sid, 0) + count
        assert by_shape == motif.count_motifs_untyped(etn, catalog)


def test_all_out_star_closed_form():
    catalog = motif.enumerate_catalog()
    for n in range(1, 51):
        counts = motif.count_motifs(star_etn(n), catalog)
        expected = {"m1(E,A)": n}
        if n >= 2:
            expected["m4(E,A,A)"] = n * (n - 1) // 2
        assert counts == expected


def test_all_in_star_closed_form():
    catalog = motif.enumerate_catalog()
    counts = motif.count_motifs(star_etn(7, direction="in"), catalog)
    assert counts == {"m2(E,A)": 7, "m7(E,A,A)": 21}


def test_mixed_type_pairs_sorted_for_symmetric_shapes():
    ego = "0xe"
    etn = EgoTransferNetwork(
        ego=ego,
        node_types={ego: "E", "0xa": "A", "0xc": "C"},
        edges=[(ego, "0xa", "Stablecoin"), (ego, "0xc", "Stablecoin")],
    )
    counts = motif.count_motifs(etn, motif.enumerate_catalog())
    assert counts == {"m1(E,A)": 1, "m1(E,C)": 1, "m4(E,A,C)": 1}
    assert "m4(E,C,A)" not in counts


def test_asymmetric_pair_types_in_role_order():
    # counterpart A receives from ego (out), counterpart C sends to ego (in):
    # the (out, in) shape m5 lists the out role first
    ego = "0xe"
    etn = EgoTransferNetwork(
        ego=ego,
        node_types={ego: "E", "0xa": "A", "0xc": "C"},
        edges=[(ego, "0xa", "Stablecoin"), ("0xc", ego, "Stablecoin")],
    )
    counts = motif.count_motifs(etn, motif.enumerate_catalog())
    assert counts["m5(E,A,C)"] == 1
    assert "m5(E,C,A)" not in counts


def test_motif_key_sorts_only_symmetric():
    catalog = motif.enumerate_catalog()
    assert motif.motif_key(catalog.by_id["m4"], ("C", "A")) == "m4(E,A,C)"
    assert motif.motif_key(catalog.by_id["m5"], ("C", "A")) == "m5(E,C,A)"


# ---------------------------------------------------------------------------
# edge-list and MxE features
# ---------------------------------------------------------------------------

def test_edge_features_count_parallel_edges():
    ego = "0xe"
    etn = EgoTransferNetwork(
        ego=ego,
        node_types={ego: "E", "0xc": "C", "0xn": "N"},
        edges=[
            (ego, "0xc", "Stablecoin"),
            (ego, "0xc", "Stablecoin"),
            ("0xc", ego, "Cryptocurrency"),
            ("0xn", ego, "Synthetic"),
        ],
    )
    assert motif.edge_features(etn) == {
        "(E,C)Stablecoin": 2,
        "(C,E)Cryptocurrency": 1,
        "(N,E)Synthetic": 1,
    }


def test_motif_edge_features_keys_and_merge():
    ego = "0xe"
    etn = EgoTransferNetwork(
        ego=ego,
        node_types={ego: "E", "0xa": "A", "0xc": "C"},
        edges=[(ego, "0xa", "Stablecoin"), (ego, "0xc", "Cryptocurrency")],
    )
    feats = motif.motif_edge_features(etn, motif.enumerate_catalog())
    assert feats == {
        "m1(E,A)|(E,A)Stablecoin": 1,
        "m1(E,C)|(E,C)Cryptocurrency": 1,
        # pair instance merges both members' labels in sorted order
        "m4(E,A,C)|(E,A)Stablecoin+(E,C)Cryptocurrency": 1,
    }


def test_motif_edge_features_oversize_flag():
    etn = star_etn(6)
    feats = motif.motif_edge_features(etn, motif.enumerate_catalog(), max_nodes=5)
    assert feats[motif.OVERSIZE_KEY] == 1
    assert all("|" not in k or k.startswith("m1") for k in feats)
    assert not any(k.startswith("m4") for k in feats)  # pair space skipped
    # under the limit the pair features come back
    feats = motif.motif_edge_features(etn, motif.enumerate_catalog(), max_nodes=6)
    assert motif.OVERSIZE_KEY not in feats
    assert sum(v for k, v in feats.items() if k.startswith("m4")) == 15


def test_transaction_features_mode_dispatch(rng):
    catalog = motif.enumerate_catalog()
    etn = random_etn(rng)
    m = motif.transaction_features(etn, catalog, "M")
    e = motif.transaction_features(etn, catalog, "E")
    both = motif.transaction_features(etn, catalog, "M+E")
    assert both == {**m, **e}
    assert motif.transaction_features(etn, catalog, "MxE") == motif.motif_edge_features(etn, catalog)
    with pytest.raises(ValueError):
        motif.transaction_features(etn, catalog, "Q")


def test_normalize_mode_aliases():
    assert motif.normalize_mode("ME") == "M+E"
    assert motif.normalize_mode("M+E") == "M+E"
    assert motif.normalize_mode("MxE") == "MxE"
    assert motif.normalize_mode("mxe") == "MxE"
    assert motif.normalize_mode("M") == "M"
    with pytest.raises(ValueError):
        motif.normalize_mode("EM")


# ---------------------------------------------------------------------------
# featurize_store agrees with the reference per-ETN implementation
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("mode", ["M", "E", "M+E", "MxE"])
def test_featurize_store_matches_reference(small_corpus, tmp_path, mode):
    from motifscope.featurize import featurize_store

    out = tmp_path / "features.jsonl"
    stats = featurize_store(small_corpus["store"], mode, out)
    catalog = motif.enumerate_catalog()
    expected = {}
    for tx in storage.iter_store(small_corpus["store"]):
        network = etn_mod.build_etn(tx)
        expected[(tx.tx_hash, tx.ego_account)] = motif.transaction_features(network, catalog, mode)
    got = {(tx, ego): feats for tx, ego, feats in storage.iter_features(out)}
    assert stats.transactions == len(expected)
    assert got == expected
