#!/usr/bin/env python3
"""Generate reference fixtures for the web client's test suite.

The TypeScript replica must byte-match the session server's canonical JSON,
digests, number formatting, and reducer behavior. These fixtures pin that
contract: every expected value here is produced by the server-side package,
and floats travel as hex-encoded IEEE-754 bits so JSON round-trips cannot
blur them.

Run from frontend/:  python3 scripts/make_fixtures.py
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import struct
import sys
from importlib import resources
from pathlib import Path

from datacube import client as dc_client
from datacube import dataset as ds
from datacube import localization as loc
from datacube import protocol as proto
from datacube import viewmath as vm
from datacube.runtime import content_hash

OUT_DIR = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def fbits(v: float) -> str:
    """Hex of the IEEE-754 big-endian bit pattern (exact float carrier)."""
    return struct.pack(">d", v).hex()


def write(name: str, obj) -> None:
    path = OUT_DIR / name
    path.write_text(json.dumps(obj, indent=1, sort_keys=False, ensure_ascii=False) + "\n",
                    encoding="utf-8")
    print(f"wrote {path.relative_to(OUT_DIR.parent.parent)}")


# ---------------------------------------------------------------------------
# Float repr / display formatting


def float_corpus(rng: random.Random) -> list[float]:
    out: list[float] = [
        0.0, -0.0, 1.0, -1.0, 0.5, 0.1, 0.2, 0.30000000000000004, 1.5, -2.5,
        100.125, 1e16, 9999999999999998.0, 1e17, -1e16, 1e-4, 9.999e-5, 1e-5,
        123456.0, 1234567.0, 5e-324, 2.2250738585072014e-308,
        1.7976931348623157e308, 0.0001, 0.00001, 1048576.0, 3.141592653589793,
        2.718281828459045, 1/3, 2/3, 665.6, -0.000001, 123456789.123456789,
        1.015625, 1.046875, 0.125, 0.375, 6.103515625e-05,
        16777217.0, 9007199254740992.0, 9007199254740994.0,
        1e21, 1e22, 1.0000000000000002, 0.9999999999999999,
    ]
    for exp in range(-20, 21):
        out.append(float(10.0 ** exp))
        out.append(float(10.0 ** exp) * 1.0000000000000002)
    for _ in range(3000):
        kind = rng.randrange(5)
        if kind == 0:
            v = rng.uniform(-1e6, 1e6)
        elif kind == 1:
            v = rng.uniform(-1.0, 1.0)
        elif kind == 2:
            v = math.ldexp(rng.random() * 2 - 1, rng.randrange(-60, 61))
        elif kind == 3:
            v = float(rng.randrange(-10**12, 10**12))
        else:
            bits = rng.getrandbits(64)
            v = struct.unpack(">d", struct.pack(">Q", bits))[0]
            if not math.isfinite(v):
                v = rng.random()
        out.append(v)
    return out


def gen_floats(rng: random.Random) -> None:
    corpus = float_corpus(rng)
    write("floats.json", [{"bits": fbits(v), "repr": repr(v)} for v in corpus])
    write("displayvalue.json", [{"bits": fbits(v), "text": ds.display_value(v)} for v in corpus])


# ---------------------------------------------------------------------------
# blake2b


def gen_blake2b(rng: random.Random) -> None:
    cases = []
    msgs = [b"", b"a", b"abc", b"hello world", bytes(range(256))]
    for n in (1, 55, 63, 64, 65, 127, 128, 129, 255, 256, 257, 1000, 4096):
        msgs.append(rng.randbytes(n))
    for msg in msgs:
        for outlen in (8, 16, 32, 64):
            cases.append({
                "msg_hex": msg.hex(),
                "outlen": outlen,
                "hex": hashlib.blake2b(msg, digest_size=outlen).hexdigest(),
            })
    write("blake2b.json", cases)


# ---------------------------------------------------------------------------
# Dataset fixtures

FIXTURE_CSV = """id,year,zipcode,alpha,beta,gamma
p1,2000,A1,1.5,10,0.25
p1,2001,A1,2.5,12,0.5
p1,2002,B2,3.25,9,0.125
p2,2000,B2,-1.5,11,0.002
p2,2001,A1,0.75,10.5,10000
p2,2003,C3,0.1,9.5,0.3
p3,1999,C3,100.125,8,3.5
p3,2003,,42.0,7.5,0.0625
p4,2001,B2,0.30000000000000004,10,0.1
p4,2002,C3,-7.25,8.25,2e-3
"""

SECOND_CSV = """id,year,only
q1,2010,5.5
q1,2011,6.25
q2,2010,-1.125
"""


def dataset_to_json(d: ds.Dataset) -> dict:
    return {
        "columns": [{"name": c.name, "kind": c.kind.value} for c in d.columns],
        "rows": [
            {
                "individual_id": r.individual_id,
                "year": r.year,
                "region": r.region,
                "values_bits": [fbits(v) for v in r.values],
            }
            for r in d.rows
        ],
        "individuals": {k: list(v) for k, v in d.individuals.items()},
    }


def filter_to_json(f: ds.FilterState) -> dict:
    return {
        "numeric_ranges": {k: [fbits(lo), fbits(hi)] for k, (lo, hi) in f.numeric_ranges.items()},
        "year_range": list(f.year_range) if f.year_range else None,
        "regions": sorted(f.regions) if f.regions is not None else None,
    }


def gen_dataset_cases() -> tuple[ds.Dataset, proto.DatasetRef, proto.DatasetRef]:
    d = ds.parse_csv(FIXTURE_CSV)
    ref = proto.DatasetRef(content_hash(FIXTURE_CSV.encode()), d.columns)
    d2 = ds.parse_csv(SECOND_CSV)
    ref2 = proto.DatasetRef(content_hash(SECOND_CSV.encode()), d2.columns)

    mapping = ds.DimensionMapping("alpha", "beta", "gamma", "alpha", "beta", True)
    filters = {
        "empty": ds.FilterState(),
        "year": ds.FilterState(year_range=(2000, 2002)),
        "regions": ds.FilterState(regions=("A1", "B2")),
        "regions_empty": ds.FilterState(regions=()),
        "numeric": ds.FilterState(numeric_ranges={"alpha": (-1.5, 3.25)}),
        "combined": ds.FilterState(
            numeric_ranges={"alpha": (-10.0, 50.0), "gamma": (0.0, 1.0)},
            year_range=(1999, 2002),
            regions=("A1", "B2", "C3"),
        ),
    }

    visible = ds.apply_filters(d, filters["combined"])
    points = ds.project_points(d, mapping, visible)
    traces = ds.build_traces(d, mapping, visible)
    stats = vm.subset_statistics(d, filters["combined"], d.numeric_columns)
    bars = vm.aggregate_bars(d, "beta", filters["year"])

    wl = ds.Watchlist()
    wl = ds.watchlist_add(wl, d, "p3")
    wl = ds.watchlist_add(wl, d, "p1")

    cases = {
        "csv": FIXTURE_CSV,
        "csv2": SECOND_CSV,
        "content_hash": ref.content_hash,
        "content_hash2": ref2.content_hash,
        "parsed": dataset_to_json(d),
        "parsed2": dataset_to_json(d2),
        "filters": {
            name: {"filter": filter_to_json(f), "visible": list(ds.apply_filters(d, f))}
            for name, f in filters.items()
        },
        "normalized": {
            col: [fbits(v) for v in ds.normalize_channel(d, col)] for col in d.numeric_columns
        },
        "mapping": mapping._asdict(),
        "projected": [
            {
                "row_index": p.row_index,
                "position_bits": [fbits(c) for c in p.position],
                "color_bits": fbits(p.color_t),
                "size_bits": fbits(p.size_t),
            }
            for p in points
        ],
        "traces": [
            {"individual_id": t.individual_id, "rows": [p.row_index for p in t.points]}
            for t in traces
        ],
        "stats": {
            col: {
                "count": s.count,
                "mean_bits": None if s.mean is None else fbits(s.mean),
                "std_bits": None if s.std is None else fbits(s.std),
                "min_bits": None if s.min is None else fbits(s.min),
                "max_bits": None if s.max is None else fbits(s.max),
                "mean_text": None if s.mean is None else ds.display_value(s.mean),
                "std_text": None if s.std is None else ds.display_value(s.std),
            }
            for col, s in stats.items()
        },
        "bars": {
            "value_column": bars.value_column,
            "filter": filter_to_json(filters["year"]),
            "bars": [
                {
                    "region": b.region,
                    "year": b.year,
                    "value_bits": fbits(b.value),
                    "height_bits": fbits(b.height),
                    "color": list(b.color),
                }
                for b in bars.bars
            ],
        },
        "colormap": [
            {"t_bits": fbits(t), "rgb": list(ds.colormap(t))}
            for t in [0.0, 1.0, -0.5, 2.0, 1/3, 2/3, 0.5, 0.1, 0.25, 0.75, 0.9, 1/6, 0.999]
        ],
        "record_detail": {
            str(i): [[k, v] for k, v in ds.record_detail(d, i)] for i in (0, 3, 7)
        },
        "export_all": ds.export_csv(d, range(len(d.rows))),
        "export_subset": ds.export_csv(d, visible),
        "watchlist_export": ds.watchlist_export(wl, d),
        "watchlist_entry_order": [e.individual_id for e in wl.entries],
        "snapshot_faces": {},
        "parse_errors": [],
    }

    faces = {}
    for face in vm.FACES:
        snap = vm.project_snapshot(points, face)
        faces[face.name] = [
            {
                "u_bits": fbits(p.u),
                "v_bits": fbits(p.v),
                "color_bits": fbits(p.color_t),
                "size_bits": fbits(p.size_t),
            }
            for p in snap
        ]
    cases["snapshot_faces"] = faces

    bad_csvs = [
        "id,year\n",  # header only is fine -> parse succeeds with zero rows
        'id,year\np1,"2000"\n',
        "id,year\np1,1899\n",
        "id,year\np1,2201\n",
        "id,year\np1,2000\np1,2000\n",
        "id,year,v\np1,2000,abc\n",
        "id,year,v\np1,2000,nan\n",
        "id,year,v\np1,2000,inf\n",
        "id,year,v\np1,2000\n",
        "id,year,v\np1,2000,1,2\n",
        "id,v\np1,1\n",
        "id,id,year\np1,p1,2000\n",
        "id,year\n,2000\n",
        "year,v\na,1\n",
        "",
    ]
    parse_errors = []
    for text in bad_csvs:
        try:
            parsed = ds.parse_csv(text)
            parse_errors.append({"csv": text, "ok": True, "rows": len(parsed.rows)})
        except ds.CsvFormatError as exc:
            parse_errors.append({"csv": text, "ok": False, "row": exc.row, "column": exc.column})
    cases["parse_errors"] = parse_errors

    # Acceptance of server-parseable numeric spellings.
    lax_csv = "id,year,v\np1, 2000 ,1_000.5\np2,2_001, .5 \np3,2002,+1.e3\n"
    lax = ds.parse_csv(lax_csv)
    cases["lax_numeric"] = {
        "csv": lax_csv,
        "years": [r.year for r in lax.rows],
        "values_bits": [fbits(r.values[0]) for r in lax.rows],
    }

    write("dataset_cases.json", cases)
    return d, ref, ref2


# ---------------------------------------------------------------------------
# Reducer script with per-step digests


def gen_state_script(d: ds.Dataset, ref: proto.DatasetRef, ref2: proto.DatasetRef) -> None:
    mapping = ds.DimensionMapping("alpha", "beta", "gamma", "alpha", "beta", True)
    filt = ds.FilterState(
        numeric_ranges={"alpha": (-10.0, 50.0), "gamma": (0.0, 1.0)},
        year_range=(1999, 2002),
        regions=("A1", "B2", "C3"),
    )
    visible = ds.apply_filters(d, filt)
    points = ds.project_points(d, mapping, visible)
    snap_x = tuple(vm.project_snapshot(points, vm.face_from_name("+x")))
    snap_z = tuple(vm.project_snapshot(points, vm.face_from_name("-z")))
    snap_y = tuple(vm.project_snapshot(points, vm.face_from_name("+y")))

    pose1 = vm.Pose(vm.Vec3(0.30000000000000004, 1.6, 2.5),
                    vm.quat_normalize(vm.Quat(0.9, 0.1, -0.2, 0.3)))
    pose2 = vm.Pose(vm.Vec3(-1.0, 1.5, 0.0), vm.Quat(1.0, 0.0, 0.0, 0.0))
    spin = vm.axis_angle(vm.Vec3(0.0, 1.0, 0.0), 0.7)

    ops: list[tuple[proto.Op, str]] = [
        (proto.LoadDataset(ref), proto.SERVER_SENDER),
        (proto.SetMapping(mapping), "c1"),
        (proto.SetTransform(proto.CUBE_ID, vm.ScaledTransform(
            spin, vm.Vec3(0.1 + 0.2, 1.0, -0.25), 0.75)), "c1"),
        (proto.SetFilter(filt), "c2"),
        (proto.SelectRow(3), "c2"),
        (proto.WatchlistAdd("p1"), "c1"),
        (proto.WatchlistAdd("p2"), "c1"),
        (proto.WatchlistAdd("p1"), "c2"),  # duplicate: no-op
        (proto.CreateSnapshot(snap_x, vm.face_from_name("+x")), "c1"),
        (proto.SetVizMode(proto.VIZ_BARCHART), "c2"),
        (proto.SetUserPose("c1", pose1), "c1"),
        (proto.CreateSnapshot(snap_z, vm.face_from_name("-z")), "c2"),
        (proto.DeleteSnapshot("snapshot-9"), "c1"),
        (proto.CreateSnapshot(snap_y, vm.face_from_name("+y")), "c2"),
        (proto.WatchlistRemove("p1"), "c2"),
        (proto.WatchlistRemove("zzz"), "c1"),  # unknown id: no-op
        (proto.SetTransform(proto.WALL_ID, vm.ScaledTransform(
            vm.Quat(1.0, 0.0, 0.0, 0.0), vm.Vec3(0.5, 1.25, -3.0), 1.75)), "c1"),
        (proto.SetUserPose("c2", pose2), "c2"),
        (proto.SetUserPose("c1", None), "c1"),
        (proto.SelectRow(None), "c1"),
        (proto.DeleteSnapshot("snapshot-999"), "c2"),  # unknown: no-op
        (proto.SetTransform("nonesuch", vm.ScaledTransform(
            vm.Quat(1.0, 0.0, 0.0, 0.0), vm.Vec3(0.0, 0.0, 0.0), 1.0)), "c2"),  # no-op
        (proto.SelectRow(7), "c2"),
        (proto.LoadDataset(ref2), proto.SERVER_SENDER),  # resets cube analysis state
        (proto.SetUserPose("c2", pose2), "c2"),
    ]

    state = proto.initial_session_state()
    steps = []
    for i, (op, origin) in enumerate(ops, start=1):
        state = proto.apply_op(state, i, op, origin)
        steps.append({
            "seq": i,
            "origin": origin,
            "op": proto.op_to_wire(op),
            "canonical": proto.canonical_json(proto.state_to_wire(state)),
            "digest": proto.state_digest(state),
        })

    initial = proto.initial_session_state()
    write("state_script.json", {
        "initial_canonical": proto.canonical_json(proto.state_to_wire(initial)),
        "initial_digest": proto.state_digest(initial),
        "steps": steps,
    })


# ---------------------------------------------------------------------------
# Face selection / picking


def gen_faces(rng: random.Random) -> None:
    cases = []
    fixed_dirs = [
        (1.0, 0.0, 0.0), (-1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, -1.0, 0.0),
        (0.0, 0.0, 1.0), (0.0, 0.0, -1.0), (1.0, 1.0, 1.0), (-1.0, 1.0, -1.0),
    ]
    ident = vm.Quat(1.0, 0.0, 0.0, 0.0)
    for dv in fixed_dirs:
        d3 = vm.normalized(vm.Vec3(*dv))
        cases.append({
            "dir_bits": [fbits(c) for c in d3],
            "rot_bits": [fbits(c) for c in ident],
            "face": vm.select_face(d3, ident).name,
        })
    for _ in range(300):
        d3 = vm.normalized(vm.Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)))
        q = vm.quat_normalize(vm.Quat(
            rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)))
        cases.append({
            "dir_bits": [fbits(c) for c in d3],
            "rot_bits": [fbits(c) for c in q],
            "face": vm.select_face(d3, q).name,
        })
    write("faces.json", cases)


def gen_picks(rng: random.Random) -> None:
    cases = []
    for _ in range(200):
        n = rng.randrange(0, 8)
        spheres = []
        for row in range(n):
            spheres.append((
                vm.Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)),
                rng.uniform(0.05, 0.6),
                row * 3,
            ))
        origin = vm.Vec3(rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4))
        direction = vm.normalized(vm.Vec3(
            rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)))
        hit = vm.pick_point(origin, direction, spheres)
        cases.append({
            "origin_bits": [fbits(c) for c in origin],
            "dir_bits": [fbits(c) for c in direction],
            "spheres": [
                {"center_bits": [fbits(c) for c in ctr], "radius_bits": fbits(r), "row": row}
                for ctr, r, row in spheres
            ],
            "hit": hit,
        })
    write("picks.json", cases)


# ---------------------------------------------------------------------------
# Protocol odds and ends: anchor payload, arbitration, localization


def gen_protocol_misc() -> None:
    anchor_env = proto.Envelope(proto.ANCHOR_UPLOAD, "c1",
                                proto.AnchorPayload(dc_client.DEFAULT_ANCHOR))
    initial = proto.initial_session_state()

    modes = [dc_client.GAZE_TAP, dc_client.RAY_POINTER]
    sources = list(dc_client.POINTER_SOURCES)
    arbitration = [
        {
            "mode": m,
            "source": s,
            "result": dc_client.arbitrate_input(m, dc_client.PointerEvent(s, 0.0)),
        }
        for m in modes
        for s in sources
    ]

    table = loc.bundled_table()
    samples = []
    for key in sorted(table.keys):
        for lang in ("en", "ja", "fr"):
            samples.append({"key": key, "lang": lang, "text": table.translate(key, lang)})
    samples.append({"key": "nonexistent.key", "lang": "ja",
                    "text": table.translate("nonexistent.key", "ja")})

    write("protocol_misc.json", {
        "protocol_version": proto.PROTOCOL_VERSION,
        "anchor_upload_canonical": proto.canonical_json(proto.envelope_to_wire(anchor_env)),
        "initial_state_canonical": proto.canonical_json(proto.state_to_wire(initial)),
        "initial_state_digest": proto.state_digest(initial),
        "default_cube_transform": proto.canonical_json(
            proto.state_to_wire(initial)["objects"]["cube"]["transform"]),
        "default_wall_transform": proto.canonical_json(
            proto.state_to_wire(initial)["objects"]["wall"]["transform"]),
        "arbitration": arbitration,
        "localization_samples": samples,
        "table_languages": sorted(table.languages),
    })

    strings = resources.files("datacube").joinpath("data/strings.tsv").read_text("utf-8")
    (OUT_DIR / "strings.tsv").write_text(strings, encoding="utf-8")
    print("wrote frontend/tests/fixtures/strings.tsv")


def main() -> int:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    rng = random.Random(20240811)
    gen_floats(rng)
    gen_blake2b(rng)
    d, ref, ref2 = gen_dataset_cases()
    gen_state_script(d, ref, ref2)
    gen_faces(rng)
    gen_picks(rng)
    gen_protocol_misc()
    return 0


if __name__ == "__main__":
    sys.exit(main())
