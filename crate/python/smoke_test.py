"""Smoke test for the actionvec Python module.

    cd crates/py && maturin develop --release
    python python/smoke_test.py
"""

import json
import math
import os
import tempfile

import actionvec as av


def norm(v):
    return math.sqrt(sum(x * x for x in v))


def check_descriptors(tmp):
    m = av.DescriptorMatrix([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    assert (m.rows, m.dim, len(m)) == (2, 3, 2)
    path = os.path.join(tmp, "m.desc")
    m.write(path)
    assert os.path.getsize(path) == 21 + 4 * 6
    assert av.DescriptorMatrix.read(path).to_list() == m.to_list()
    empty = av.DescriptorMatrix([], dim=4)
    assert (empty.rows, empty.dim) == (0, 4)
    try:
        av.DescriptorMatrix([[float("nan")]])
    except ValueError:
        pass
    else:
        raise AssertionError("NaN accepted")


def check_encoders():
    rows = [[float((i * 7 + j * 3) % 11) - 5.0 for j in range(4)] for i in range(60)]
    m = av.DescriptorMatrix(rows)

    pca = av.fit_pca(m, 3, seed=1)
    assert (pca.input_dim, pca.output_dim) == (4, 3)
    assert pca.project(m).dim == 3

    cb = av.fit_kmeans(m, 5, seed=1)
    vlad = av.encode_vlad(cb, m)
    assert vlad.kind == "vlad" and vlad.dim == 5 * 4
    assert abs(norm(vlad.values) - 1.0) < 1e-6

    g = av.fit_gmm(m, 3, seed=1)
    assert abs(sum(g.priors) - 1.0) < 1e-9
    for post in g.posteriors(m):
        assert abs(sum(post) - 1.0) < 1e-9
    fv = av.encode_fisher(g, m)
    assert fv.kind == "fisher" and fv.dim == 2 * 3 * 4
    assert abs(norm(fv.values) - 1.0) < 1e-6

    fused = av.fuse([vlad, fv])
    assert fused.dim == vlad.dim + fv.dim

    probs = av.DescriptorMatrix([[0.25, 0.75], [0.75, 0.25]])
    assert av.objects1k(probs).values == [0.5, 0.5]
    assert av.average_pool(probs).dim == 2


def check_lcd():
    side, channels = 2, 6
    frames = av.DescriptorMatrix(
        [[math.sin(0.3 * r + 0.7 * c) for c in range(channels)] for r in range(3 * side * side)]
    )
    pca = av.fit_pca(frames, 3)
    cb = av.fit_kmeans(pca.project(frames), 2)
    enc = av.encode_lcd(frames, side, pca, codebook=cb)
    assert enc.kind == "lcd-vlad" and enc.dim == 2 * 3


def check_svm():
    feats, labels = [], []
    for c in range(3):
        for i in range(6):
            v = [0.1 * i] * 3
            v[c] += 5.0
            feats.append(av.Encoding("avgpool", v))
            labels.append(c)
    model = av.train_one_vs_all(feats, labels, c_param=10.0)
    assert (model.classes, model.dim) == (3, 3)
    acc, confusion = model.evaluate(feats, labels)
    assert acc == 1.0, acc
    assert [sum(r) for r in confusion] == [6, 6, 6]


def check_pipeline(tmp):
    manifest = av.generate_synth(
        os.path.join(tmp, "data"), classes=3, videos_per_class=8, frames_per_video=10,
        descriptor_dim=8, separation=8.0, seed=2, splits=2,
    )
    cfg = {
        "manifest": manifest,
        "output_dir": os.path.join(tmp, "out"),
        "features": [{"encoder": "fisher", "layer": "local"}],
        "encoder": {"alpha": 0.2, "vlad_k": 4, "fv_k": 4, "pca_dim": 4},
        "samples": {"pca": 500, "kmeans": 500, "gmm": 500},
        "seed": 3,
    }
    path = os.path.join(tmp, "run.json")
    with open(path, "w") as f:
        json.dump(cfg, f)
    per_split, mean = av.run_all(path)
    assert [s for s, _ in per_split] == ["split1", "split2"]
    assert abs(mean - sum(a for _, a in per_split) / 2) < 1e-12
    assert mean >= 0.9, per_split
    with open(os.path.join(tmp, "out", "split1", "report.json")) as f:
        report = json.load(f)
    assert set(report) == {"split", "accuracy", "per_class", "confusion"}


def main():
    with tempfile.TemporaryDirectory() as tmp:
        check_descriptors(tmp)
        check_encoders()
        check_lcd()
        check_svm()
        check_pipeline(tmp)
    print("actionvec", av.__version__, "smoke test ok")


if __name__ == "__main__":
    main()
