"""Simulated-network harness: determinism, fault injection, divergence search."""

import json

import pytest

from datacube import client as cl
from datacube import protocol as proto
from datacube import sim


def small(**kw):
    defaults = dict(name="small", participants=3, duration_s=20.0, random_ops=60)
    defaults.update(kw)
    return sim.Scenario(**defaults)


def run(scenario, **cfg):
    return sim.run_scenario(scenario, sim.SimNetConfig(**cfg))


# -- determinism ---------------------------------------------------------------


def test_report_byte_identical_across_reruns():
    a = sim.report_to_json(run(small(), seed=7))
    b = sim.report_to_json(run(small(), seed=7))
    assert a == b


def test_report_is_canonical_json():
    text = sim.report_to_json(run(small(), seed=1))
    doc = json.loads(text)
    assert text == json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def test_seeds_change_traffic_not_convergence():
    r1 = run(small(), seed=1)
    r2 = run(small(), seed=2)
    assert r1["converged"] and r2["converged"]
    assert r1["canonical_digest"] != r2["canonical_digest"]


# -- convergence ----------------------------------------------------------------


def test_small_run_converges():
    report = run(small(), seed=3)
    assert report["converged"] is True
    assert report["ops_submitted"] == 60
    assert report["server_seq"] == report["ops_applied"]
    assert report["first_divergence_seq"] is None
    for c in report["clients"]:
        assert c["synced"] is True
        assert c["digest"] == report["canonical_digest"]
        assert c["ops_left"] == 0


def test_observers_follow_without_writing():
    report = run(small(observers=2), seed=4)
    assert report["converged"] is True
    roles = [c["role"] for c in report["clients"]]
    assert roles.count(proto.ROLE_OBSERVER) == 2
    for c in report["clients"]:
        if c["role"] == proto.ROLE_OBSERVER:
            assert c["ops_left"] == 0
            assert c["digest"] == report["canonical_digest"]


def test_drop_probability_forces_rejoins_yet_converges():
    report = run(small(duration_s=30.0), seed=5, drop_probability=0.25)
    assert report["converged"] is True
    assert sum(c["joins"] for c in report["clients"]) > 3
    assert sum(c["full_states"] for c in report["clients"]) > 3


def test_forced_outage_reconnects_and_converges():
    scenario = small(disconnects=(sim.Outage(client=1, at=3.0, duration=2.0),))
    report = run(scenario, seed=6)
    assert report["converged"] is True
    victim = report["clients"][1]
    assert victim["joins"] >= 2
    assert victim["synced"] is True


def test_seventh_participant_rejected_and_recorded():
    report = run(small(participants=7, random_ops=30), seed=8)
    assert len(report["rejections"]) == 1
    rej = report["rejections"][0]
    assert rej["code"] == proto.ERR_SESSION_FULL
    assert rej["client_index"] == 6
    loser = report["clients"][6]
    assert loser["synced"] is False
    assert loser["connected"] is False
    # the rejected bot keeps its ops; everyone else drains theirs
    assert loser["ops_left"] > 0
    assert report["converged"] is True


def test_scripted_op_lands_in_state():
    op_wire = proto.op_to_wire(proto.SetVizMode(proto.VIZ_BARCHART))
    scenario = small(random_ops=0,
                     script=(sim.ScriptedOp(at=5.0, client=0, op_wire=op_wire),))
    config = sim.SimNetConfig(seed=9)
    simulation = sim.Simulation(scenario, config)
    report = simulation.run()
    assert report["ops_submitted"] == 1
    assert report["scripted_skipped"] == 0
    assert simulation.server.state.objects[proto.CUBE_ID].state.viz_mode == proto.VIZ_BARCHART


def test_scripted_op_before_sync_is_skipped():
    op_wire = proto.op_to_wire(proto.WatchlistAdd("p1"))
    scenario = small(random_ops=0,
                     script=(sim.ScriptedOp(at=0.0, client=0, op_wire=op_wire),))
    report = run(scenario, seed=10)
    assert report["scripted_skipped"] == 1
    assert report["ops_submitted"] == 0


# -- scenario parsing --------------------------------------------------------------


def test_parse_scenario_full_document():
    doc = {
        "name": "storm",
        "participants": 4,
        "observers": 1,
        "duration_s": 12,
        "random_ops": 200,
        "script": [
            {"at": 2.5, "client": 0,
             "op": proto.op_to_wire(proto.SetVizMode(proto.VIZ_SCATTER))},
        ],
        "disconnects": [{"client": 2, "at": 4.0, "duration": 1.5}],
    }
    s = sim.parse_scenario(json.dumps(doc))
    assert s.name == "storm"
    assert s.participants == 4 and s.observers == 1
    assert s.duration_s == 12.0 and s.random_ops == 200
    assert s.script == (sim.ScriptedOp(2.5, 0, doc["script"][0]["op"]),)
    assert s.disconnects == (sim.Outage(2, 4.0, 1.5),)


def test_parse_scenario_defaults():
    s = sim.parse_scenario("{}")
    assert s.participants == 5
    assert s.duration_s == 30.0


@pytest.mark.parametrize("text", [
    "not json",
    "[1,2,3]",
    '{"participants": -1}',
    '{"participants": true}',
    '{"participants": 0, "observers": 0}',
    '{"duration_s": 0}',
    '{"script": [{"at": 1.0}]}',
    '{"script": [{"at": -1, "client": 0, "op": {"type": "set_viz_mode", "mode": "scatter"}}]}',
    '{"script": [{"at": 1, "client": 9, "op": {"type": "set_viz_mode", "mode": "scatter"}}]}',
    '{"script": [{"at": 1, "client": 0, "op": {"type": "warp_drive"}}]}',
    '{"disconnects": [{"client": 0, "at": 1}]}',
    '{"disconnects": [{"client": 99, "at": 1, "duration": 1}]}',
    '{"name": 7}',
])
def test_parse_scenario_rejects(text):
    with pytest.raises(sim.ScenarioParseError):
        sim.parse_scenario(text)


@pytest.mark.parametrize("kwargs", [
    dict(latency_ms=(-1.0, 5.0)),
    dict(latency_ms=(50.0, 5.0)),
    dict(drop_probability=1.5),
])
def test_net_config_validation(kwargs):
    with pytest.raises(sim.ScenarioParseError):
        sim.SimNetConfig(**kwargs)


# -- divergence localization ----------------------------------------------------------


def test_find_first_divergence_clean_run_is_none():
    assert sim.find_first_divergence(small(), sim.SimNetConfig(seed=11)) is None


def test_find_first_divergence_pinpoints_bad_seq(monkeypatch):
    """Sabotage replica application from one seq on; the search names that seq."""
    import dataclasses

    from datacube import viewmath as vm

    real = cl.apply_op
    ghost = vm.Pose(vm.Vec3(9.0, 9.0, 9.0), vm.IDENTITY_QUAT)

    def tampered(state, seq, op, origin=None):
        new = real(state, seq, op, origin=origin)
        if seq >= 5:
            poses = dict(new.user_poses)
            poses["ghost"] = ghost
            new = dataclasses.replace(new, user_poses=poses)
        return new

    monkeypatch.setattr(cl, "apply_op", tampered)
    scenario = small(random_ops=40)
    config = sim.SimNetConfig(seed=12)
    report = sim.run_scenario(scenario, config)
    assert report["converged"] is False
    assert report["first_divergence_seq"] == 5
