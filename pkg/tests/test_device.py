import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qkforge.device import (
    CalibrationError,
    CouplingCalibration,
    DeviceTopology,
    InfeasibleSubgraphError,
    QubitCalibration,
    Subgraph,
    calib_report,
    connected_subsets,
    default_exclusion,
    exclude_noisy,
    load_topology,
    placement_distribution,
    save_topology,
    select_subgraph,
    topology_from_dict,
    topology_to_dict,
    write_report_csv,
)
from qkforge.fixtures import injected_bad_qubits, line_device, seven_qubit_h, torino_like


def toy_doc(error=0.01):
    return {
        "name": "toy",
        "num_qubits": 2,
        "gate_set": ["rx", "rz", "cz", "id"],
        "qubits": [
            {"id": 0, "t1_us": 100, "t2_us": 80, "readout_error": 0.02, "gate_errors": {"rx": 1e-4}},
            {"id": 1, "t1_us": 120, "t2_us": 90, "readout_error": 0.03, "gate_errors": {"rx": 2e-4}},
        ],
        "couplings": [{"a": 0, "b": 1, "error": error, "duration_ns": 300}],
    }


def graph_device(n, edges, readout=None, errors=None):
    readout = readout or [0.01] * n
    errors = errors or [0.01] * len(edges)
    qubits = tuple(QubitCalibration(q, 100.0, 80.0, readout[q], {"rx": 1e-4, "rz": 0.0}) for q in range(n))
    couplings = tuple(CouplingCalibration(a, b, e) for (a, b), e in zip(edges, errors))
    return DeviceTopology("g", n, ("rx", "rz", "cz", "id"), qubits, couplings)


# -- loading


def test_toy_file_loads(tmp_path):
    path = tmp_path / "toy.json"
    path.write_text(json.dumps(toy_doc()))
    topo = load_topology(path)
    assert topo.num_qubits == 2
    assert len(topo.couplings) == 1


def test_zero_coupling_error_rejected(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(toy_doc(error=0.0)))
    with pytest.raises(CalibrationError, match="error"):
        load_topology(path)


def test_torino_fixture_roundtrip(tmp_path):
    topo = torino_like()
    save_topology(topo, tmp_path / "t.json")
    again = load_topology(tmp_path / "t.json")
    assert again.num_qubits == 133
    assert topology_to_dict(again) == topology_to_dict(topo)


def test_unparseable_file(tmp_path):
    path = tmp_path / "x.json"
    path.write_text("{not json")
    with pytest.raises(CalibrationError):
        load_topology(path)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d["qubits"][0].update(readout_error=1.5),
        lambda d: d["qubits"][0].update(t1_us=0),
        lambda d: d["couplings"].append({"a": 1, "b": 0, "error": 0.02}),
        lambda d: d["couplings"].append({"a": 0, "b": 7, "error": 0.02}),
        lambda d: d.update(gate_set=["x", "cz"]),
        lambda d: d.update(gate_set=["rx", "cz", "cx"]),
        lambda d: d["qubits"].pop(),
        lambda d: d.pop("name"),
    ],
)
def test_invariant_violations(mutate):
    doc = toy_doc()
    mutate(doc)
    with pytest.raises(CalibrationError):
        topology_from_dict(doc)


def test_gate_aliases_canonicalized():
    doc = toy_doc()
    doc["gate_set"] = ["rz", "x", "cnot", "i"]
    assert topology_from_dict(doc).gate_set == ("rz", "x", "cx", "id")


# -- subgraph selection


def test_full_topology_without_exclusions():
    topo = seven_qubit_h()
    sub = select_subgraph(topo, topo.num_qubits, excluded=0)
    assert sub.qubit_ids == tuple(range(7))
    assert len(sub.edges) == len(topo.couplings)


def test_path_with_bad_middle_is_infeasible():
    topo = graph_device(3, [(0, 1), (1, 2)], readout=[0.01, 0.5, 0.01])
    with pytest.raises(InfeasibleSubgraphError):
        select_subgraph(topo, 2, excluded=1, noise_types=("readout",))


def test_torino_rx_exclusion_leaves_119():
    topo = torino_like()
    nodes, _ = exclude_noisy(topo, 14, ("1q_gate:rx",))
    assert len(nodes) == 119
    bad_gate, _ = injected_bad_qubits()
    assert nodes.isdisjoint(bad_gate)


def test_default_exclusion_scale():
    assert default_exclusion(133) == 14
    assert default_exclusion(7) == 1


def test_exclusion_removes_incident_edges():
    topo = torino_like()
    nodes, edges = exclude_noisy(topo, 14)
    assert all(a in nodes and b in nodes for a, b in edges)


def brute_force_best(adj, edges, n):
    best = None
    for combo in itertools.combinations(sorted(adj), n):
        members = set(combo)
        # connectivity by flood fill
        seen, stack = {combo[0]}, [combo[0]]
        while stack:
            v = stack.pop()
            for u in adj[v] & members:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        if seen != members:
            continue
        deg = max(len(adj[v] & members) for v in combo)
        errs = [edges[(a, b)] for a, b in edges if a in members and b in members]
        key = (-deg, float(np.mean(errs)) if errs else 0.0, combo)
        best = key if best is None or key < best else best
    return best


@st.composite
def small_graphs(draw):
    n = draw(st.integers(3, 8))
    pairs = list(itertools.combinations(range(n), 2))
    chosen = draw(st.lists(st.sampled_from(pairs), min_size=1, max_size=len(pairs), unique=True))
    errors = draw(st.lists(st.floats(1e-3, 0.05), min_size=len(chosen), max_size=len(chosen)))
    k = draw(st.integers(1, n))
    return n, chosen, errors, k


@given(small_graphs())
def test_selection_matches_brute_force(case):
    n, edges, errors, k = case
    topo = graph_device(n, edges, errors=errors)
    adj = {v: set() for v in range(n)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    err_map = {(min(a, b), max(a, b)): e for (a, b), e in zip(edges, errors)}
    expected = brute_force_best(adj, err_map, k)
    if expected is None:
        with pytest.raises(InfeasibleSubgraphError):
            select_subgraph(topo, k, excluded=0)
        return
    sub = select_subgraph(topo, k, excluded=0)
    assert sub.qubit_ids == expected[2]


@given(small_graphs())
def test_esu_enumerates_each_connected_subset_once(case):
    n, edges, _, k = case
    adj = {v: set() for v in range(n)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    found = [tuple(sorted(s)) for s in connected_subsets(adj, k)]
    assert len(found) == len(set(found))
    expected = set()
    for combo in itertools.combinations(range(n), k):
        members = set(combo)
        seen, stack = {combo[0]}, [combo[0]]
        while stack:
            v = stack.pop()
            for u in adj[v] & members:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        if seen == members:
            expected.add(combo)
    assert set(found) == expected


def test_selected_subgraph_is_connected_and_degree_maximal():
    topo = torino_like()
    for n in (4, 5, 7):
        sub = select_subgraph(topo, n)
        assert sub.n == n
        assert isinstance(sub, Subgraph)  # construction validates connectivity


def test_beam_search_above_exhaustive_limit():
    topo = torino_like()
    sub = select_subgraph(topo, 10)
    assert sub.n == 10


def test_tie_break_prefers_lower_error_then_ids():
    # star-free path 0-1-2-3: every 2-subset has max degree 1
    topo = graph_device(4, [(0, 1), (1, 2), (2, 3)], errors=[0.02, 0.01, 0.01])
    assert select_subgraph(topo, 2, excluded=0).qubit_ids == (1, 2)


# -- placement distribution


def sub_with_errors(errors):
    topo = line_device(len(errors) + 1, edge_errors=errors)
    return select_subgraph(topo, topo.num_qubits, excluded=0)


def test_placement_equal_errors():
    assert sorted(placement_distribution(sub_with_errors([0.02, 0.02])).values()) == [0.5, 0.5]


def test_placement_hand_values():
    probs = list(placement_distribution(sub_with_errors([0.01, 0.03])).values())
    assert probs == pytest.approx([0.75, 0.25], abs=1e-12)


def test_placement_single_edge():
    assert list(placement_distribution(sub_with_errors([0.05])).values()) == [1.0]


def test_placement_requires_edges():
    topo = line_device(1, edge_errors=[])
    with pytest.raises(ValueError):
        placement_distribution(select_subgraph(topo, 1, excluded=0))


@given(st.lists(st.floats(1e-4, 1.0), min_size=1, max_size=8), st.floats(0.01, 1.0))
def test_placement_normalized_and_scale_free(errors, scale):
    base = placement_distribution(sub_with_errors(errors))
    assert math.isclose(sum(base.values()), 1.0, abs_tol=1e-12)
    scaled = placement_distribution(sub_with_errors([e * scale for e in errors]))
    assert list(scaled.values()) == pytest.approx(list(base.values()), abs=1e-12)


# -- calibration report


def test_report_uniform_errors_keep_id_order():
    topo = line_device(5, readout=0.02)
    assert [r[0] for r in calib_report(topo, "readout")] == [f"q{i}" for i in range(5)]


def test_report_torino_readout_top_rows_are_injected():
    _, bad_readout = injected_bad_qubits()
    rows = calib_report(torino_like(), "readout")
    assert {int(label[1:]) for label, _ in rows[:18]} == bad_readout


def test_report_two_qubit_empty_when_no_couplings():
    topo = line_device(1, edge_errors=[])
    assert calib_report(topo, "2q_gate") == []


def test_report_sorted_descending_and_csv(tmp_path):
    rows = calib_report(torino_like(), "2q_gate")
    errs = [e for _, e in rows]
    assert errs == sorted(errs, reverse=True)
    write_report_csv(rows, tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "target,error"


def test_report_unknown_noise_type():
    with pytest.raises(KeyError):
        calib_report(line_device(2), "t3")
