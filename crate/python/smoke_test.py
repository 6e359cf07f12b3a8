"""Smoke test for the rgait extension module.

Build it with `cargo build --release -p rgait-py`, then run this script;
it looks for the compiled library under target/release.
"""

import importlib.machinery
import importlib.util
import math
import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parents[1]


def load_rgait():
    for name in ("librgait.so", "librgait.dylib", "rgait.dll"):
        lib = ROOT / "target" / "release" / name
        if lib.exists():
            loader = importlib.machinery.ExtensionFileLoader("rgait", str(lib))
            spec = importlib.util.spec_from_file_location("rgait", str(lib), loader=loader)
            module = importlib.util.module_from_spec(spec)
            loader.exec_module(module)
            return module
    sys.exit("rgait extension not found; run `cargo build --release -p rgait-py` first")


def main():
    rgait = load_rgait()

    assert rgait.dice_coeff([1, 1, 0, 0], [1, 1, 0, 0]) == 1.0
    assert rgait.dice_coeff([1, 0], [0, 1]) == 0.0
    assert math.isclose(rgait.rec_loss([0.5] * 4, [1, 0, 1, 0]), math.log(2), rel_tol=1e-9)
    assert math.isclose(rgait.detection_loss(0.8, 0.2, 1), -math.log(0.8), rel_tol=1e-9)

    seqs = rgait.toy_sequences(identities=4, seed=1)
    gallery = [s for s, role in seqs if role == "gallery"]
    probes = [s for s, role in seqs if role == "probe"]
    assert len(gallery) == 16 and len(probes) == 8

    occluded = rgait.occlude(probes[0], 0.2, 0.3, 5, 7)
    mask = occluded.mask
    assert not any(mask[:5])
    assert rgait.degree_bin(mask) == "20-30%"
    for frame, hidden in zip(occluded.frames, mask):
        if hidden:
            assert frame.foreground_count() == 0

    geis = [rgait.compute_gei(s)[2] for s in gallery]
    pca = rgait.Pca.fit(geis, 0.98)
    feats = [pca.project(g) for g in geis]
    clf = rgait.Classifier.train(feats, [s.subject_id for s in gallery], n_trees=50, seed=0)

    rankings, truths = [], []
    for p in probes:
        ranked = clf.predict_ranked(pca.project(rgait.compute_gei(p)[2]))
        assert math.isclose(sum(score for _, score in ranked), 1.0, rel_tol=1e-9)
        rankings.append([label for label, _ in ranked])
        truths.append(p.subject_id)
    curve = rgait.cmc(rankings, truths, len(clf.classes))
    assert all(a <= b for a, b in zip(curve, curve[1:]))
    assert curve[-1] == 1.0

    print(f"rgait smoke test ok: {pca.n_components} PCA components, CMC {curve}")


if __name__ == "__main__":
    main()
