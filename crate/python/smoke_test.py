"""Smoke test for the `sfpn` Python extension.

Build and install the module first:

    pip install maturin
    maturin develop --release -m crates/python/Cargo.toml

then run `python3 python/smoke_test.py`.
"""

import json
import os
import tempfile

import sfpn

POSES = ("frontal", "three_quarter", "profile")


def check(name, ok):
    print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return ok


def one_hot_records(subjects):
    records = []
    for s in range(subjects):
        vec = [0.0] * sfpn.EMBEDDING_DIM
        vec[s] = 1.0
        for pose in POSES:
            for i in range(10):
                records.append((f"n{s:06}", pose, i, vec))
    return records


def main():
    results = []
    results.append(check("count_params base backbone", sfpn.count_params("base") == 1_235_496))
    results.append(check("count_params dwc backbone", sfpn.count_params("dwc") == 745_670))

    rows = sfpn.describe("base")
    results.append(check("describe has 19 rows", len(rows) == 19 and rows[-1] == ("softmax", 1, 1, 8631)))

    net = sfpn.Network("dwc-gdc", classes=5, seed=3)
    size = net.input_size
    pixels = [((k * 37) % 101) / 100.0 for k in range(2 * 3 * size * size)]
    emb = net.embed(pixels, 2)
    results.append(check("embed shape", len(emb) == 2 and all(len(e) == sfpn.EMBEDDING_DIM for e in emb)))
    results.append(check("embed non-negative", all(v >= 0.0 for e in emb for v in e)))

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "w.sfpn")
        net.save(path)
        back = sfpn.Network.load(path)
        results.append(check("weights round trip", back.variant == "dwc-gdc" and back.embed(pixels, 2) == emb))
        with open(path, "r+b") as f:
            f.seek(40)
            byte = f.read(1)
            f.seek(40)
            f.write(bytes([byte[0] ^ 0xFF]))
        try:
            sfpn.Network.load(path)
            results.append(check("corrupt file rejected", False))
        except ValueError as e:
            results.append(check("corrupt file rejected", "crc" in str(e)))

    results.append(check("chi2", abs(sfpn.chi2([1.0, 0.0], [0.0, 1.0]) - 2.0) < 1e-9))
    results.append(check("eer worked example", abs(sfpn.eer([0.1, 0.2, 0.6], [0.5, 0.8, 0.9]) - 1 / 3) < 1e-12))
    det = sfpn.det_curve([0.1], [0.9])
    results.append(check("det sentinels", det[0][1:] == (0.0, 1.0) and det[-1][1:] == (1.0, 0.0)))

    report = json.loads(sfpn.evaluate(one_hot_records(101), template_size=1, protocol="same-pose"))
    combos = report["combinations"]
    results.append(check("one-hot evaluation", len(combos) == 3 and all(c["eer"] == 0.0 for c in combos)))

    grad = json.loads(sfpn.gradcheck("base", 0))
    results.append(check("gradcheck base", grad["max_rel_error"] < 1e-4))

    log = [json.loads(line) for line in sfpn.train_toy(classes=3, per_class=6, epochs=2, size=33).splitlines()]
    results.append(check("toy training log", [r["epoch"] for r in log] == [1, 2]))

    failed = results.count(False)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    raise SystemExit(1 if failed else 0)


if __name__ == "__main__":
    main()
