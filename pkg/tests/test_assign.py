import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from conftest import brute_force_assignment, grid_network, make_network, random_rpv_instance
from ridepool.assign import (
    greedy_insertion_baseline,
    rebalance,
    solve_zac,
    verify_zac_solution,
)
from ridepool.network import AssignedRequest, Request, VehicleState
from ridepool.rpv import RPVGraph, ServePlan, VehicleFit, ZonePath


def tiny_graph(capacity=2, shared_seat=False):
    """One path o -> d serving two requests with one vehicle.

    shared_seat=True makes both requests occupy the same position span so a
    capacity-1 vehicle can only take one of them.
    """
    net = make_network([(0, 1, 100), (1, 0, 100)])
    serves = {
        1: ServePlan(0, 0, 1, 100, 1, False),
        2: ServePlan(0, 0, 1, 100, 1, False),
    }
    zp = ZonePath(
        id=0,
        anchor_loc=0,
        start_time=0,
        prefix_nodes=(0, 1),
        prefix_times=(0, 100),
        suffix=(),
        serves=serves,
        fits={0: VehicleFit(0, capacity, (capacity, capacity), {})},
    )
    graph = RPVGraph(
        paths=[zp],
        request_edges={1: [0], 2: [0]},
        vehicle_edges={0: [0]},
        requests={
            1: Request(1, 0, 1, 0),
            2: Request(2, 0, 1, 0),
        },
        vehicle_caps={0: capacity},
    )
    return net, graph


@pytest.mark.parametrize("backend", ["scipy", "bundled"])
def test_two_requests_fit_capacity_two(backend):
    net, graph = tiny_graph(capacity=2)
    sol = solve_zac(graph, net, backend=backend)
    assert sol.objective_value == 2
    assert sol.request_vehicle == {1: 0, 2: 0}


@pytest.mark.parametrize("backend", ["scipy", "bundled"])
def test_capacity_one_binds(backend):
    net, graph = tiny_graph(capacity=1)
    sol = solve_zac(graph, net, backend=backend)
    assert sol.objective_value == 1
    assert len(sol.request_vehicle) == 1


def test_empty_graph():
    net, graph = tiny_graph()
    graph.paths = []
    graph.request_edges = {}
    graph.vehicle_edges = {}
    sol = solve_zac(graph, net)
    assert sol.objective_value == 0 and sol.status == "optimal"


def test_matches_brute_force_on_random_instances(rng):
    solved = 0
    while solved < 30:
        inst = random_rpv_instance(rng)
        if inst is None:
            continue
        sol = solve_zac(inst.graph, inst.net)
        assert sol.status == "optimal"
        assert sol.objective_value == brute_force_assignment(inst.graph)
        solved += 1


def test_bundled_backend_agrees_with_scipy(rng):
    solved = 0
    while solved < 8:
        inst = random_rpv_instance(rng, max_paths=15)
        if inst is None:
            continue
        a = solve_zac(inst.graph, inst.net, backend="scipy")
        b = solve_zac(inst.graph, inst.net, backend="bundled")
        assert a.objective_value == b.objective_value
        solved += 1


def test_verification_catches_bad_solutions():
    net, graph = tiny_graph(capacity=1)
    with pytest.raises(RuntimeError, match="capacity"):
        verify_zac_solution(graph, {1: 0, 2: 0}, {0: 0})
    with pytest.raises(RuntimeError, match="without a vehicle"):
        verify_zac_solution(graph, {1: 0}, {})
    with pytest.raises(RuntimeError, match="inadmissible"):
        verify_zac_solution(graph, {1: 1}, {0: 0})


def test_adding_a_path_never_decreases_objective(rng):
    checked = 0
    while checked < 10:
        inst = random_rpv_instance(rng)
        if inst is None or len(inst.graph.paths) < 2:
            continue
        net, graph = inst.net, inst.graph
        base = solve_zac(graph, net).objective_value
        trimmed = RPVGraph(
            paths=graph.paths[:-1],
            request_edges={
                r: [p for p in ps if p != graph.paths[-1].id]
                for r, ps in graph.request_edges.items()
            },
            vehicle_edges={
                v: [p for p in ps if p != graph.paths[-1].id]
                for v, ps in graph.vehicle_edges.items()
            },
            requests=graph.requests,
            vehicle_caps=graph.vehicle_caps,
        )
        trimmed.request_edges = {r: ps for r, ps in trimmed.request_edges.items() if ps}
        trimmed.vehicle_edges = {v: ps for v, ps in trimmed.vehicle_edges.items() if ps}
        smaller = solve_zac(trimmed, net).objective_value
        assert smaller <= base
        checked += 1


# ------------------------------------------------------------ rebalance


def test_rebalance_empty_sides():
    net = grid_network(3)
    assert rebalance({}, {0: 1}, net).moves == {}
    assert rebalance({0: 1}, {}, net).moves == {}


def test_rebalance_single_vehicle_picks_nearer_origin():
    net = grid_network(4, w=30)
    moves = rebalance({7: 0}, {1: 1, 2: 15}, net).moves
    assert moves == {7: 1}  # origin one hop away beats the far corner


def test_rebalance_matches_hungarian(rng):
    for _ in range(10):
        net = grid_network(4, w=25)
        n_v = int(rng.integers(1, 5))
        n_r = int(rng.integers(1, 5))
        vehicles = {v: int(rng.integers(0, 16)) for v in range(n_v)}
        reqs = {r: int(rng.integers(0, 16)) for r in range(n_r)}
        plan = rebalance(vehicles, reqs, net)
        cost = sum(net.travel_time(vehicles[v], reqs[r]) for v, r in plan.moves.items())
        matrix = np.array(
            [[net.travel_time(vehicles[v], reqs[r]) for r in sorted(reqs)] for v in sorted(vehicles)]
        )
        rows, cols = linear_sum_assignment(matrix)
        assert len(plan.moves) == min(n_v, n_r)
        assert cost == matrix[rows, cols].sum()


# --------------------------------------------------------------- greedy


def test_greedy_serves_single_request_with_nearest_vehicle():
    net = grid_network(4, w=30)
    vehicles = [
        VehicleState(0, 15, 0, 2),  # far corner
        VehicleState(1, 1, 0, 2),  # one hop away
    ]
    demand = [Request(0, 0, 5, 0)]
    sol = greedy_insertion_baseline(demand, vehicles, net, tau=120, lam=240, now=0)
    assert sol.request_vehicle == {0: 1}
    plan = sol.stop_plans[1]
    assert [node for node, _, _ in plan] == [0, 5]


def test_greedy_rejects_infeasible_request():
    net = grid_network(4, w=30)
    vehicles = [VehicleState(0, 15, 0, 2)]
    demand = [Request(0, 0, 1, 0)]  # pickup 180s away but tau = 60
    sol = greedy_insertion_baseline(demand, vehicles, net, tau=60, lam=240, now=0)
    assert sol.request_vehicle == {}


def test_greedy_respects_capacity_and_windows(rng):
    net = grid_network(4, w=30)
    vehicles = [VehicleState(v, int(rng.integers(0, 16)), 0, 1) for v in range(2)]
    demand = [Request(i, *rng.choice(16, size=2, replace=False), 0) for i in range(4)]
    sol = greedy_insertion_baseline(demand, vehicles, net, tau=180, lam=120, now=0)
    for vid, plan in sol.stop_plans.items():
        onboard = 0
        for node, picks, drops in plan:
            onboard += len(picks) - len(drops)
            assert 0 <= onboard <= 1


def test_greedy_never_beats_zac(rng):
    checked = 0
    while checked < 12:
        inst = random_rpv_instance(rng)
        if inst is None:
            continue
        zac_obj = solve_zac(inst.graph, inst.net).objective_value
        greedy = greedy_insertion_baseline(
            inst.demand, inst.vehicles, inst.net, inst.tau, inst.lam, inst.t
        )
        assert len(greedy.request_vehicle) <= zac_obj
        checked += 1
