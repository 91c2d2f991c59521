"""Exhaustive oracle: scope guards, certified optima, and the staged baseline."""
from __future__ import annotations

import dataclasses

import pytest

from nfvlight import ForwardingGraph, Request, Scenario, SubstrateNetwork, validate
from nfvlight.exact import build_miqcp
from nfvlight.oracle import (
    OracleLimits,
    OracleScaleError,
    as_assignment,
    solve_exhaustive,
    solve_sequential_baseline,
)
from conftest import make_tiny


def swap_request(scn: Scenario, **kw) -> Scenario:
    return dataclasses.replace(scn, requests=(dataclasses.replace(scn.requests[0], **kw),))


class TestScaleGuards:
    def test_fan_out_is_not_a_chain(self, tiny):
        g = ForwardingGraph(nodes=("s", "f", "d", "e"), arcs=(("s", "f"), ("f", "d"), ("f", "e")))
        req = Request(
            graph=g,
            d_max=1.0,
            initial_rates={("s", "f"): 2.0},
            source_restrictions=(("s", "v1", 1.0),),
            dest_restrictions=(("d", "v3", 0.5), ("e", "v1", 0.5)),
        )
        with pytest.raises(OracleScaleError, match="request 0: forwarding graph is not a chain"):
            solve_exhaustive(dataclasses.replace(tiny, requests=(req,)))

    def test_two_parallel_chains_in_one_graph(self, tiny):
        g = ForwardingGraph(nodes=("s", "d", "s2", "d2"), arcs=(("s", "d"), ("s2", "d2")))
        req = Request(
            graph=g,
            d_max=1.0,
            initial_rates={("s", "d"): 1.0, ("s2", "d2"): 1.0},
            source_restrictions=(("s", "v1", 1.0), ("s2", "v1", 1.0)),
            dest_restrictions=(("d", "v3", 1.0), ("d2", "v3", 1.0)),
        )
        with pytest.raises(OracleScaleError, match="need one source and one destination"):
            solve_exhaustive(dataclasses.replace(tiny, requests=(req,)))

    def test_source_must_be_pinned(self, tiny):
        with pytest.raises(OracleScaleError, match="source must be pinned to one vertex"):
            solve_exhaustive(swap_request(tiny, source_restrictions=()))

    def test_partial_destination_shares(self, tiny):
        scn = swap_request(tiny, dest_restrictions=(("d", "v3", 0.25),))
        with pytest.raises(OracleScaleError, match="destination shares must be pinned and sum to 1"):
            solve_exhaustive(scn)

    def test_duplicate_destination_vertex(self, tiny):
        scn = swap_request(tiny, dest_restrictions=(("d", "v3", 0.5), ("d", "v3", 0.5)))
        with pytest.raises(OracleScaleError, match="duplicate destination vertex"):
            solve_exhaustive(scn)

    def test_zero_node_rate_factor(self, tiny):
        g = ForwardingGraph(nodes=("s", "f", "d"), arcs=(("s", "f"), ("f", "d")), alpha_node={"f": 0.0})
        with pytest.raises(OracleScaleError, match="node f needs a positive rate factor"):
            solve_exhaustive(swap_request(tiny, graph=g))

    def test_dead_chain_arc(self, tiny):
        g = ForwardingGraph(
            nodes=("s", "f", "d"),
            arcs=(("s", "f"), ("f", "d")),
            alpha_arc={("f", "d"): {("s", "f"): 0.0}},
        )
        with pytest.raises(OracleScaleError, match="a chain arc carries no traffic"):
            solve_exhaustive(swap_request(tiny, graph=g))

    def test_three_requests(self, tiny):
        r = tiny.requests[0]
        with pytest.raises(OracleScaleError, match="at most two requests or two functions"):
            solve_exhaustive(dataclasses.replace(tiny, requests=(r, r, r)))

    def test_two_requests_with_a_two_function_chain(self, tiny):
        g = ForwardingGraph(nodes=("s", "f", "g", "d"), arcs=(("s", "f"), ("f", "g"), ("g", "d")))
        long = dataclasses.replace(tiny.requests[0], graph=g)
        plain_g = ForwardingGraph(nodes=("s", "d"), arcs=(("s", "d"),))
        plain = Request(
            graph=plain_g,
            d_max=1.0,
            initial_rates={("s", "d"): 1.0},
            source_restrictions=(("s", "v1", 1.0),),
            dest_restrictions=(("d", "v3", 1.0),),
        )
        with pytest.raises(OracleScaleError, match="each chain may hold at most one function"):
            solve_exhaustive(dataclasses.replace(tiny, requests=(long, plain)))

    def test_nine_vertices(self, tiny):
        vs = tuple(f"v{i}" for i in range(1, 10))
        edges: list[tuple[str, str]] = []
        delay = {}
        for a, b in zip(vs, vs[1:]):
            edges += [(a, b), (b, a)]
            delay[(a, b)] = delay[(b, a)] = 0.1
        sub = SubstrateNetwork(
            vertices=vs, edges=tuple(edges), delay=delay,
            capacity={"v5": 8.0}, wavelengths=2, line_rate=4.0,
        )
        req = dataclasses.replace(tiny.requests[0], dest_restrictions=(("d", "v9", 1.0),))
        with pytest.raises(OracleScaleError, match="at most eight vertices"):
            solve_exhaustive(Scenario(substrate=sub, requests=(req,), name="long"))


class TestJointOptimum:
    def test_tiny_certified_values(self, tiny_joint):
        res = tiny_joint
        assert res.mode == "joint"
        assert res.embedded == (True,)
        assert res.fulfilled == (False,)
        assert res.lateness == 0.46666666666666656
        assert res.per_request_lateness == (0.46666666666666656,)
        assert res.objective == -95.33333333333333
        assert res.lex == (-0.0, -1.0, 0.46666666666666656, 12.599999999999998)
        assert res.placements == {(0, "f"): "v2"}
        assert res.service[(0, "f")] == pytest.approx(8.0, abs=1e-9)
        assert res.topology == {("v1", "v2"): 0, ("v2", "v3"): 0}
        assert res.loads == {("v1", "v2"): 2.0, ("v2", "v3"): 2.0}

    def test_tiny_segments(self, tiny_joint):
        segs = tiny_joint.segments
        assert [(s.arc, s.va, s.vb, s.rate, s.branch) for s in segs] == [
            (("s", "f"), "v1", "v2", 2.0, None),
            (("f", "d"), "v2", "v3", 2.0, 0),
        ]
        assert segs[0].hops == (("v1", "v2"),)
        assert segs[1].hops == (("v2", "v3"),)

    def test_perm0_certified_values(self, perm0_joint):
        res = perm0_joint
        assert res.lateness == 2.2546099290780144
        assert res.objective == -77.45390070921985
        assert res.placements == {(0, "f"): "v2"}
        assert res.service[(0, "f")] == pytest.approx(50.0, abs=1e-9)
        # two fresh lightpaths bypass the line, two ride single fibers
        assert res.topology == {
            ("v2", "v4"): 0, ("v3", "v6"): 1, ("v2", "v3"): 1, ("v4", "v5"): 0,
        }
        assert res.certificate["certified"] is True
        assert res.certificate["leaves"] == 55
        assert res.certificate["placement_rounds"] == 3

    def test_certificate_fields(self, tiny_joint):
        cert = tiny_joint.certificate
        assert sorted(cert) == [
            "allocation", "atomic_placements", "certified", "colorings_cached",
            "leaves", "mode", "placement_rounds", "wa_only_routes", "wall_seconds",
        ]
        assert cert["mode"] == "joint"
        assert cert["allocation"] == "budget_exhausting"
        assert cert["wa_only_routes"] is True
        assert cert["atomic_placements"] is True
        assert cert["wall_seconds"] >= 0.0

    def test_deterministic(self, tiny, tiny_joint):
        again = solve_exhaustive(tiny)
        for field in ("lateness", "objective", "lex", "placements", "service",
                      "topology", "loads", "segments", "embedded", "fulfilled"):
            assert getattr(again, field) == getattr(tiny_joint, field)


class TestFixedTopologyBaseline:
    def test_perm0_fixed_lightpaths_mirror_fibers(self, perm0):
        res = solve_exhaustive(perm0, fixed_topology=True)
        assert res.mode == "fixed"
        assert res.lateness == 4.3546099290780145
        assert res.topology == {
            ("v1", "v2"): 0, ("v2", "v3"): 0, ("v3", "v4"): 0,
            ("v4", "v5"): 0, ("v5", "v6"): 0,
        }

    def test_joint_never_loses_to_fixed(self, perm0, perm0_joint):
        fixed = solve_exhaustive(perm0, fixed_topology=True)
        assert perm0_joint.lateness <= fixed.lateness
        assert fixed.lateness - perm0_joint.lateness == pytest.approx(2.1)


class TestSequentialPipeline:
    def test_motivation_joint_beats_sequential(self, motivation):
        joint = solve_exhaustive(motivation)
        seq = solve_sequential_baseline(motivation)
        assert joint.lateness == 1.427450980392157
        assert seq.lateness == 3.824293481613159
        assert joint.lateness < seq.lateness
        # joint moves f next to its source, the pipeline parks both
        # functions on the big vertex
        assert joint.placements == {(0, "f"): "v3", (1, "g"): "v4"}
        assert seq.placements == {(0, "f"): "v4", (1, "g"): "v4"}

    def test_pipeline_certificate_records_stage_one(self, motivation):
        seq = solve_sequential_baseline(motivation)
        cert = seq.certificate
        assert cert["pipeline"] == "placements frozen from the fixed-topology stage"
        assert cert["stage1_lateness"] == 3.824293481613159
        assert cert["stage1_objective"] == pytest.approx(-161.7570651838684)
        assert cert["mode"] == "joint"


class TestServiceAllocation:
    def test_symmetric_pair_splits_the_budget_evenly(self, tiny):
        g = ForwardingGraph(nodes=("s", "f", "g", "d"), arcs=(("s", "f"), ("f", "g"), ("g", "d")))
        scn = swap_request(tiny, graph=g)
        res = solve_exhaustive(scn)
        assert res.placements == {(0, "f"): "v2", (0, "g"): "v2"}
        assert res.service[(0, "f")] == pytest.approx(4.0, abs=1e-6)
        assert res.service[(0, "g")] == pytest.approx(4.0, abs=1e-6)
        assert sum(res.service.values()) == pytest.approx(8.0, abs=1e-6)
        assert res.lateness == pytest.approx(1.3, abs=1e-6)

    def test_skewed_arrivals_equalize_queue_slack(self, tiny):
        # g sees twice the rate, so it gets the extra service: the split
        # 3/5 leaves one unit of slack in each processing queue
        g = ForwardingGraph(
            nodes=("s", "f", "g", "d"),
            arcs=(("s", "f"), ("f", "g"), ("g", "d")),
            alpha_arc={("f", "g"): {("s", "f"): 2.0}, ("g", "d"): {("f", "g"): 0.5}},
        )
        scn = swap_request(tiny, graph=g)
        res = solve_exhaustive(scn)
        assert res.service[(0, "f")] == pytest.approx(3.0, abs=1e-6)
        assert res.service[(0, "g")] == pytest.approx(5.0, abs=1e-6)
        assert res.lateness == pytest.approx(2.3, abs=1e-6)

    def test_chain_saturating_the_line_rate_is_declined(self, tiny):
        # the middle arc would carry 4.0, the full line rate, so no
        # stable embedding exists and the oracle leaves the request out
        g = ForwardingGraph(
            nodes=("s", "f", "g", "d"),
            arcs=(("s", "f"), ("f", "g"), ("g", "d")),
            alpha_arc={("f", "g"): {("s", "f"): 2.0}},
        )
        scn = swap_request(tiny, graph=g)
        res = solve_exhaustive(scn)
        assert res.embedded == (False,)
        assert res.fulfilled == (False,)
        assert res.lateness == 0.0
        assert res.objective == 0.0
        assert res.topology == {}
        assert res.segments == ()

    def test_two_requests_share_one_capacity_pool(self, tiny):
        g = ForwardingGraph(nodes=("s", "g", "d"), arcs=(("s", "g"), ("g", "d")))
        second = Request(
            graph=g,
            d_max=1.0,
            initial_rates={("s", "g"): 1.0},
            source_restrictions=(("s", "v3", 1.0),),
            dest_restrictions=(("d", "v1", 1.0),),
        )
        scn = dataclasses.replace(tiny, requests=(tiny.requests[0], second))
        res = solve_exhaustive(scn)
        assert res.embedded == (True, True)
        assert res.placements == {(0, "f"): "v2", (1, "g"): "v2"}
        assert sum(res.service.values()) == pytest.approx(8.0, abs=1e-6)
        # the minimax allocation leaves both requests equally late
        assert res.per_request_lateness[0] == pytest.approx(res.per_request_lateness[1])
        assert res.lateness == pytest.approx(0.5936749891262054)

    def test_oracle_point_validates_against_the_exact_model(self, tiny):
        g = ForwardingGraph(
            nodes=("s", "f", "g", "d"),
            arcs=(("s", "f"), ("f", "g"), ("g", "d")),
            alpha_arc={("f", "g"): {("s", "f"): 2.0}, ("g", "d"): {("f", "g"): 0.5}},
        )
        scn = swap_request(tiny, graph=g)
        res = solve_exhaustive(scn)
        rep = validate(scn, build_miqcp(scn), as_assignment(res, scn, "miqcp"))
        assert rep.ok
        assert rep.approximation_error == pytest.approx(0.0, abs=1e-6)


class TestLimits:
    def test_abort_before_any_leaf(self, tiny):
        with pytest.raises(OracleScaleError, match="no feasible candidate was evaluated"):
            solve_exhaustive(tiny, limits=OracleLimits(max_leaves=0))

    def test_leaf_budget_returns_uncertified_incumbent(self, tiny, tiny_joint):
        res = solve_exhaustive(tiny, limits=OracleLimits(max_leaves=1))
        assert res.certificate["certified"] is False
        # the first leaf explored already happens to be the optimum here
        assert res.lateness == tiny_joint.lateness

    def test_time_budget_keeps_a_full_run_certified(self, tiny):
        res = solve_exhaustive(tiny, limits=OracleLimits(max_seconds=60.0))
        assert res.certificate["certified"] is True
