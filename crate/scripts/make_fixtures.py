"""Regenerates the parser fixtures under crates/core/tests/fixtures."""
import gzip
import random
import struct
from pathlib import Path

root = Path(__file__).resolve().parent.parent
out = root / "crates/core/tests/fixtures"
out.mkdir(parents=True, exist_ok=True)
rng = random.Random(20240601)

# w8a-shaped: 300 binary features, about 4% density, labels in {-1, +1}.
lines = []
for i in range(120):
    label = "+1" if rng.random() < 0.3 else "-1"
    idx = sorted(rng.sample(range(1, 301), rng.randint(0, 20)))
    if i == 0:
        idx = [1, 300]
    lines.append(" ".join([label] + [f"{j}:1" for j in idx]))
(out / "w8a-sample.libsvm").write_text("\n".join(lines) + "\n")

(out / "regression.libsvm").write_text(
    "# comment lines and blank lines are skipped\n\n2.5 1:0.5 3:-1.25\n-0.75 2:3e-2\n0\n"
)
(out / "bad-value.libsvm").write_text("+1 1:0.5\n+1 2:x\n")
(out / "descending.libsvm").write_text("-1 1:1\n+1 1:1\n+1 5:1 3:1\n")
(out / "zero-index.libsvm").write_text("+1 0:1\n")


def idx(magic, dims, payload):
    return struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims) + bytes(payload)


images = [rng.randrange(256) for _ in range(6 * 4 * 4)]
(out / "images-6x4x4.idx").write_bytes(idx(0x803, [6, 4, 4], images))
(out / "labels-6.idx").write_bytes(idx(0x801, [6], [7, 2, 1, 0, 4, 9]))
with gzip.GzipFile(out / "labels-6.idx.gz", "wb", mtime=0) as f:
    f.write(idx(0x801, [6], [7, 2, 1, 0, 4, 9]))
(out / "truncated.idx").write_bytes(idx(0x801, [10], [1, 2, 3, 4, 5]))
(out / "bad-magic.idx").write_bytes(idx(0x802, [2], [1, 2]))
(out / "trailing.idx").write_bytes(idx(0x801, [2], [1, 2, 3]))
