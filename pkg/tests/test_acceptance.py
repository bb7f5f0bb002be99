"""Acceptance gate: one test per release criterion, one PASS/FAIL line each.

Every criterion recomputes its expectations from scratch (brute-force
oracles, known-transform constructions, numpy references) rather than
trusting the code under test.
"""

import math
import random
import time

import numpy as np

from datacube import client as cl
from datacube import dataset as ds
from datacube import localization as loc
from datacube import protocol as proto
from datacube import sim
from datacube import viewmath as vm
from datacube.server import Send, SessionCore
from helpers import Loop


def verdict(name: str, ok: bool, detail: str = "") -> None:
    line = f"{'PASS' if ok else 'FAIL'} {name}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


def random_quat(rng: random.Random) -> vm.Quat:
    # Shoemake's method: uniform over SO(3)
    u1, u2, u3 = rng.random(), rng.random(), rng.random()
    a, b = math.sqrt(1.0 - u1), math.sqrt(u1)
    return vm.Quat(
        b * math.cos(2.0 * math.pi * u3),
        a * math.sin(2.0 * math.pi * u2),
        a * math.cos(2.0 * math.pi * u2),
        b * math.sin(2.0 * math.pi * u3),
    )


# -- C1: convergence at scale ---------------------------------------------------


def test_convergence_100_seeds():
    started = time.perf_counter()
    failures = []
    for seed in range(100):
        report = sim.run_scenario(
            sim.Scenario(participants=5, duration_s=30.0, random_ops=1000),
            sim.SimNetConfig(seed=seed, latency_ms=(5.0, 50.0)),
        )
        ok = (report["converged"]
              and report["ops_submitted"] == 1000
              and all(c["synced"] for c in report["clients"]))
        if not ok:
            failures.append(seed)
    elapsed = time.perf_counter() - started
    verdict(
        "convergence: 5 clients, 5-50ms, 1000 ops, 100 seeds",
        not failures and elapsed < 60.0,
        f"{100 - len(failures)}/100 converged in {elapsed:.1f}s"
        + (f"; failing seeds {failures}" if failures else ""),
    )


# -- C2: capacity ----------------------------------------------------------------


def test_capacity_join_storm():
    core = SessionCore("storm")
    for i in range(10):
        core.on_connect(f"t{i}", 0.0)
    welcomes, fulls = 0, 0
    for i in range(10):
        env = proto.Envelope(proto.JOIN_REQUEST, "new",
                             proto.JoinRequest(proto.ROLE_PARTICIPANT,
                                               proto.PROTOCOL_VERSION))
        for action in core.on_bytes(f"t{i}", proto.encode(env), 0.0):
            if isinstance(action, Send):
                if action.env.kind == proto.WELCOME:
                    welcomes += 1
                elif (action.env.kind == proto.ERROR
                      and action.env.payload.code == proto.ERR_SESSION_FULL):
                    fulls += 1
    observer_welcomes = 0
    for i in range(2):
        conn = f"obs{i}"
        core.on_connect(conn, 0.0)
        env = proto.Envelope(proto.JOIN_REQUEST, "new",
                             proto.JoinRequest(proto.ROLE_OBSERVER,
                                               proto.PROTOCOL_VERSION))
        for action in core.on_bytes(conn, proto.encode(env), 0.0):
            if isinstance(action, Send) and action.env.kind == proto.WELCOME:
                observer_welcomes += 1
    verdict(
        "capacity: 10-participant storm admits exactly 6, observers beyond",
        welcomes == 6 and fulls == 4 and core.participant_count == 6
        and observer_welcomes == 2,
        f"{welcomes} admitted, {fulls} refused, {observer_welcomes} observers",
    )


# -- C3: reconnect fidelity --------------------------------------------------------


def test_reconnect_fidelity():
    loop = Loop()
    conn_a, a = loop.add_client()
    offset = vm.RigidTransform(
        vm.axis_angle(vm.Vec3(0.0, 1.0, 0.0), 0.8), vm.Vec3(1.0, 0.0, -2.0))
    conn_b, b = loop.add_client(cl.ClientConfig(local_frame_offset=offset))
    loop.submit(conn_a, proto.WatchlistAdd("warmup"))

    loop.drop(conn_b)  # connection lost without a Leave
    for i in range(50):
        loop.submit(conn_a, proto.WatchlistAdd(f"p{i}"))

    # rejoin with every server reply observed
    conn_b2 = "reconn-b"
    loop.clients[conn_b2] = b
    b.begin_connect()
    join_sends = b.on_connected(loop.now)
    loop.server.on_connect(conn_b2, loop.now)
    received = []

    def pump(sends):
        for s in sends:
            for action in loop.server.on_bytes(conn_b2, s.frame, loop.now):
                if isinstance(action, Send) and action.conn_id == conn_b2:
                    received.append(action.env)
                    pump(b.on_bytes(action.frame, loop.now))

    pump(join_sends)
    full_states = sum(1 for env in received if env.kind == proto.FULL_STATE)
    verdict(
        "reconnect: replica equals canonical after one full-state exchange",
        b.phase == cl.SYNCED and full_states == 1
        and b.digest() == loop.server.digest() == a.digest(),
        f"{full_states} full_state, digest "
        f"{'equal' if b.digest() == loop.server.digest() else 'DIFFERS'}",
    )


# -- C4: anchor alignment -----------------------------------------------------------


def test_anchor_alignment_accuracy():
    rng = random.Random(2026)
    anchors = cl.DEFAULT_ANCHOR
    worst_exact = 0.0
    worst_noisy = 0.0
    for _ in range(1000):
        offset = vm.RigidTransform(
            random_quat(rng),
            vm.Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)))
        local = vm.transform_anchors(offset, anchors)
        solved = vm.solve_alignment(anchors, local)
        expected = vm.invert(offset)
        err = (vm.quat_angle(solved.rotation, expected.rotation)
               + vm.distance(solved.translation, expected.translation))
        worst_exact = max(worst_exact, err)

        noisy = vm.AnchorSet(tuple(
            vm.AnchorPoint(p.label, vm.Vec3(p.position.x + rng.gauss(0.0, 1e-3),
                                            p.position.y + rng.gauss(0.0, 1e-3),
                                            p.position.z + rng.gauss(0.0, 1e-3)))
            for p in local.points))
        noisy_solved = vm.solve_alignment(anchors, noisy)
        residual = vm.alignment_residual(noisy_solved, anchors, noisy)
        worst_noisy = max(worst_noisy, residual)
    verdict(
        "alignment: 1000 offsets, exact < 1e-6, noisy RMS <= 5e-3",
        worst_exact < 1e-6 and worst_noisy <= 5e-3,
        f"worst exact {worst_exact:.2e}, worst noisy RMS {worst_noisy:.2e}",
    )


# -- C5: face selection ----------------------------------------------------------------


def test_face_selection_matches_oracle():
    def np_matrix(q: vm.Quat) -> np.ndarray:
        w, x, y, z = q
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])

    locals_ = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0],
                        [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=float)
    rng = random.Random(31337)
    matches = 0
    total = 10_000
    for _ in range(total):
        view = vm.Vec3(rng.gauss(0, 1), rng.gauss(0, 1), rng.gauss(0, 1))
        if vm.norm(view) < 1e-6:
            view = vm.Vec3(1.0, 0.0, 0.0)
        q = random_quat(rng)
        world_normals = locals_ @ np_matrix(q).T
        dots = world_normals @ np.array([view.x, view.y, view.z])
        want = vm.FACES[int(np.argmin(dots))]
        if vm.select_face(view, q) == want:
            matches += 1
    verdict(
        "face selection: 10000 random pairs match 6-normal argmin",
        matches == total,
        f"{matches}/{total}",
    )


# -- C6: snapshot projection -------------------------------------------------------------


def test_snapshot_projection_exact():
    rng = random.Random(404)
    pts = [
        ds.NormalizedPoint(i, (rng.random(), rng.random(), rng.random()),
                           rng.random(), rng.random())
        for i in range(200)
    ]
    ok = True
    for face in vm.FACES:
        ua, va = face.retained_axes
        out = vm.project_snapshot(pts, face)
        mirror_out = vm.project_snapshot(pts, vm.CubeFace(face.axis, -face.sign))
        for p, s, m in zip(pts, out, mirror_out):
            raw_u = p.position[ua]
            expected_u = 1.0 - raw_u if face.sign > 0 else raw_u
            ok &= s.u == expected_u  # bit-equal
            ok &= s.v == p.position[va]
            ok &= s.color_t == p.color_t and s.size_t == p.size_t
            # mirror law between the opposite faces
            ok &= (s.u == 1.0 - m.u) if face.sign > 0 else (m.u == 1.0 - s.u)
    verdict("projection: (u,v) bit-equal to retained axes with mirror law", ok)


# -- C7: statistics and aggregation --------------------------------------------------------


def _random_dataset(rng: random.Random) -> ds.Dataset:
    cols = ["id", "year", "zipcode", "a", "b"]
    lines = [",".join(cols)]
    seen = set()
    for _ in range(rng.randint(1, 1000)):
        pid = f"p{rng.randint(1, 40)}"
        year = rng.randint(2000, 2020)
        if (pid, year) in seen:
            continue
        seen.add((pid, year))
        lines.append(",".join([
            pid, str(year), str(rng.choice((92093, 10001, 60601))),
            repr(rng.uniform(-100, 100)), repr(rng.uniform(0, 500)),
        ]))
    return ds.parse_csv("\n".join(lines) + "\n")


def test_statistics_and_aggregation_oracles():
    rng = random.Random(777)
    worst = 0.0
    bars_ok = True

    def rel(got, want):
        if want == 0.0:
            return abs(got)
        return abs(got - want) / abs(want)

    for _ in range(100):
        data = _random_dataset(rng)
        lo = rng.randint(2000, 2010)
        filt = ds.FilterState(year_range=(lo, lo + rng.randint(0, 10)))
        visible = [i for i, r in enumerate(data.rows)
                   if filt.year_range[0] <= r.year <= filt.year_range[1]]

        stats = vm.subset_statistics(data, filt, ["a", "b"])
        for col in ("a", "b"):
            vi = data.numeric_index(col)
            vals = np.array([data.rows[i].values[vi] for i in visible])
            got = stats[col]
            if len(vals) == 0:
                if got.count != 0:
                    worst = math.inf
                continue
            worst = max(worst, rel(got.mean, float(np.mean(vals))))
            worst = max(worst, rel(got.std, float(np.std(vals))))
            worst = max(worst, rel(got.min, float(np.min(vals))))
            worst = max(worst, rel(got.max, float(np.max(vals))))
            if got.count != len(vals):
                worst = math.inf

        grid = vm.aggregate_bars(data, "a", filt)
        vi = data.numeric_index("a")
        groups = {}
        for i in visible:
            r = data.rows[i]
            groups.setdefault((r.region, r.year), []).append(r.values[vi])
        means = {k: float(np.mean(v)) for k, v in groups.items()}
        bars_ok &= [(b.region, b.year) for b in grid.bars] == sorted(means)
        for b in grid.bars:
            worst = max(worst, rel(b.value, means[(b.region, b.year)]))
            if means:
                lo_m, hi_m = min(means.values()), max(means.values())
                want_h = 0.5 if hi_m == lo_m else (b.value - lo_m) / (hi_m - lo_m)
                worst = max(worst, abs(b.height - want_h))
    verdict(
        "statistics: subset stats and bar grid within 1e-12 of numpy oracle",
        worst <= 1e-12 and bars_ok,
        f"worst relative error {worst:.2e}",
    )


# -- C8: CSV round trip -------------------------------------------------------------------


def test_csv_round_trip_and_error_classes():
    rng = random.Random(515)
    fixpoint_ok = True
    for _ in range(100):
        n_numeric = rng.randint(1, 4)
        cols = ["id", "year"] + (["zipcode"] if rng.random() < 0.5 else [])
        cols += [f"m{j}" for j in range(n_numeric)]
        lines = [",".join(cols)]
        seen = set()
        for _ in range(rng.randint(0, 50)):
            pid = f"p{rng.randint(1, 8)}"
            year = rng.randint(1980, 2060)
            if (pid, year) in seen:
                continue
            seen.add((pid, year))
            fields = [pid, str(year)]
            if "zipcode" in cols:
                fields.append(str(rng.randint(10000, 99999)))
            fields += [repr(rng.uniform(-1e6, 1e6)) for _ in range(n_numeric)]
            lines.append(",".join(fields))
        text = "\n".join(lines) + "\n"
        d1 = ds.parse_csv(text)
        exported = ds.export_csv(d1, range(len(d1.rows)))
        d2 = ds.parse_csv(exported)
        fixpoint_ok &= (d1.columns, d1.rows) == (d2.columns, d2.rows)
        fixpoint_ok &= exported == ds.export_csv(d2, range(len(d2.rows)))

    crafted = {
        ds.MissingHeader: "",
        ds.DuplicateColumn: "id,year,a,a\np1,2020,1.0,2.0\n",
        ds.MissingIdOrYearColumn: "id,a\np1,1.0\n",
        ds.NonNumericValue: "id,year,a\np1,2020,soup\n",
        ds.DuplicateIdYearPair: "id,year,a\np1,2020,1.0\np1,2020,2.0\n",
    }
    classes_ok = True
    for err_class, text in crafted.items():
        _, errors = ds.validate_csv(text.encode())
        classes_ok &= any(isinstance(e, err_class) for e in errors)
    verdict(
        "csv: parse-export-parse fixpoint on 100 files; 5 error classes",
        fixpoint_ok and classes_ok,
        f"error classes {'all triggered' if classes_ok else 'MISSING'}",
    )


# -- C9: localization isolation --------------------------------------------------------------


def test_localization_isolation():
    table = loc.bundled_table()
    script = [
        proto.WatchlistAdd("p1"),
        proto.SetVizMode(proto.VIZ_BARCHART),
        proto.SetFilter(ds.FilterState(year_range=(2001, 2013))),
        proto.CreateSnapshot((vm.SnapshotPoint(0.25, 0.5, 0.75, 1.0),), vm.FACES[2]),
    ]

    def run_session(language: str) -> str:
        loop = Loop("iso")
        conn, core = loop.add_client(cl.ClientConfig(language=language))
        for op in script:
            table.translate("menu.snapshot", core.local_prefs.language)
            loop.submit(conn, op)
        assert len(loop.digests()) == 1
        return loop.server.digest()

    digest_en = run_session("en")
    digest_ja = run_session("ja")
    completeness = table.completeness_check()
    verdict(
        "localization: en/ja sessions share digests; bundled table complete",
        digest_en == digest_ja and completeness == [],
        f"digest {digest_en}, {len(completeness)} missing entries",
    )


# -- C10: input arbitration ---------------------------------------------------------------------


def test_input_arbitration_grid():
    modes = (cl.GAZE_TAP, cl.RAY_POINTER)
    mismatches = []
    for mode in modes:
        for source in cl.POINTER_SOURCES:
            got = cl.arbitrate_input(mode, cl.PointerEvent(source, 0.0))
            if source == cl.HAND_VISIBLE:
                want = cl.GAZE_TAP
            elif source in (cl.CONTROLLER_BUTTON, cl.CONTROLLER_ORIENTATION):
                want = cl.RAY_POINTER
            else:
                want = mode
            if got != want:
                mismatches.append((mode, source, got, want))
    verdict(
        "input arbitration: exhaustive mode x event grid",
        not mismatches,
        f"{2 * len(cl.POINTER_SOURCES) - len(mismatches)}"
        f"/{2 * len(cl.POINTER_SOURCES)} combinations",
    )
