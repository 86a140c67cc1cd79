"""Writes the checked-in seed corpora for the fuzz targets."""
import shutil
import struct
from pathlib import Path

root = Path(__file__).resolve().parent.parent
fixtures = root / "crates/core/tests/fixtures"
corpus = root / "fuzz/corpus"


def target(name):
    d = corpus / name
    d.mkdir(parents=True, exist_ok=True)
    return d


libsvm = target("parse_libsvm")
for f in fixtures.glob("*.libsvm"):
    shutil.copy(f, libsvm / f.name)
(libsvm / "example.libsvm").write_text("+1 1:0.5 3:2.0\n-1\n")

idx = target("parse_idx")
for f in fixtures.glob("*.idx*"):
    shutil.copy(f, idx / f.name)


def u32(v):
    return struct.pack("<I", v)


def f64s(*vs):
    return b"".join(struct.pack("<d", v) for v in vs)


wire = target("decode_update")
seeds = {
    "valid-raw": b"\x00" + u32(2) + f64s(1.0, -2.5),
    "valid-subspace": b"\x01" + u32(1) + f64s(3.0),
    "valid-pca-slices": b"\x02" + u32(2) + u32(1) + f64s(0.25) + u32(0),
    "valid-low-rank-diag": b"\x03" + u32(2) + f64s(4.0, 0.5),
    "valid-predictive": b"\x04" + u32(2) + f64s(0.9, 0.1) + u32(4) + u32(2) + u32(0) + u32(3) + f64s(-1.0, 2.0),
    "valid-empty-raw": b"\x00" + u32(0),
    "bad-tag": b"\x09" + u32(0),
    "truncated": b"\x00" + u32(3) + f64s(1.0),
    "unsorted-indices": b"\x04" + u32(0) + u32(4) + u32(2) + u32(3) + u32(1) + f64s(1.0, 1.0),
    "nan": b"\x01" + u32(1) + f64s(float("nan")),
}
for name, data in seeds.items():
    (wire / name).write_bytes(data)

config = target("parse_config")
for f in (root / "configs").glob("*.json"):
    shutil.copy(f, config / f.name)
(config / "minimal.json").write_text(
    '{"data": {"kind": "synth_logreg", "samples": 100, "features": 8},'
    ' "model": {"kind": "logreg"},'
    ' "fed": {"clients": 4, "tau": 2, "gamma": 0.1, "rounds": 5}}'
)
(config / "unknown-key.json").write_text('{"data": {"kind": "iid"}, "bogus": 1}')
