import numpy as np
import pytest

from densefeat.evaluation import (
    Manifest,
    average_precision,
    evaluate_retrieval,
    evaluate_vectors,
    format_report,
    format_sweep,
    load_codebook_bundle,
    rank_database,
    read_manifest,
    read_sweep_spec,
    run_sweep,
    save_codebook_bundle,
    train_codebook_bundle,
)
from densefeat.pipeline import ConfigError, InputError, load_config, parse_config_dict

from oracles import precision_curve_ap
from synth import write_dataset


def test_ap_examples():
    assert average_precision([5, 1, 2], {5}) == 1.0
    assert average_precision([3, 7], {7}) == 0.5
    assert average_precision([1, 2, 3], {1, 2, 3}) == 1.0
    assert average_precision([1, 2], set()) is None
    assert average_precision([0, 1, 2], {0}, query=0) is None
    # a relevant item missing from the ranking counts as zero
    assert average_precision([1, 2], {2, 9}) == 0.25


def test_ap_matches_precision_curve_oracle():
    rng = np.random.default_rng(0)
    for _ in range(2000):
        n = int(rng.integers(1, 30))
        ranked = rng.permutation(n).tolist()
        rel = set(rng.choice(n, int(rng.integers(1, n + 1)), replace=False).tolist())
        assert abs(average_precision(ranked, rel) - precision_curve_ap(ranked, rel)) <= 1e-12


def test_rank_ties_by_index():
    sim = np.array([[1.0, 0.5, 0.5, 0.9], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]])
    assert rank_database(sim, 0) == [3, 1, 2]


def brute_force_map(vectors, groups):
    n = len(groups)
    sim = [[float(np.dot(vectors[i], vectors[j])) for j in range(n)] for i in range(n)]
    seen, aps = set(), []
    for q in range(n):
        if groups[q] in seen:
            continue
        seen.add(groups[q])
        ranked = sorted((j for j in range(n) if j != q), key=lambda j: (-sim[q][j], j))
        rel = {j for j in range(n) if j != q and groups[j] == groups[q]}
        if rel:
            aps.append(precision_curve_ap(ranked, rel))
    return float(np.mean(aps)) if aps else None


def test_evaluate_vectors_matches_brute_force():
    rng = np.random.default_rng(1)
    groups = [g for g in range(10) for _ in range(3)]
    for _ in range(20):
        v = rng.normal(size=(30, 12))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        m, aps, skipped = evaluate_vectors(v, groups)
        assert abs(m - brute_force_map(v, groups)) <= 1e-12
        assert len(aps) == 10 and not skipped
        assert 0.0 <= m <= 1.0


def test_evaluate_vectors_identical_groups_and_singletons():
    rng = np.random.default_rng(2)
    base = rng.normal(size=(5, 8))
    base /= np.linalg.norm(base, axis=1, keepdims=True)
    v = np.repeat(base, 3, axis=0)
    m, _, _ = evaluate_vectors(v, [g for g in range(5) for _ in range(3)])
    assert m == 1.0
    m, aps, skipped = evaluate_vectors(base, list(range(5)))
    assert m is None and aps == [] and skipped == [0, 1, 2, 3, 4]


def test_manifest_parsing(tmp_path):
    (tmp_path / "sub").mkdir()
    p = tmp_path / "sub" / "m.tsv"
    p.write_text("# comment\n\na.png\t3\n/abs/b.png\t3\nc.png\t1\n", encoding="utf-8")
    m = read_manifest(p)
    assert m.paths[0] == tmp_path / "sub" / "a.png"
    assert str(m.paths[1]) == "/abs/b.png"
    assert m.groups == (3, 3, 1)
    assert m.query_indices() == [0, 2]
    for bad in ("a.png\n", "a.png\tx\n", "a.png\t1\na.png\t2\n", "# only comments\n"):
        p.write_text(bad, encoding="utf-8")
        with pytest.raises(InputError):
            read_manifest(p)
    p.write_text("a.png\nb.png\n", encoding="utf-8")
    assert read_manifest(p, require_groups=False).groups == (0, 0)
    with pytest.raises(InputError):
        read_manifest(tmp_path / "missing.tsv")


def small_config(tmp_path, train, extra=""):
    cfg = tmp_path / "run.ini"
    cfg.write_text(
        f"[detector]\nname = dense\n[pipeline]\ntarget_area = 0\npatch_size = 21\nk = 8\npca = false\n"
        f"train_manifest = {train.name}\n[dense]\ndelta_xy = 8\nn_scales = 2\n{extra}",
        encoding="utf-8",
    )
    return cfg


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    return write_dataset(root, n_groups=4, copies=3, shape=(64, 80))


def test_identical_within_group_gives_perfect_map(tmp_path):
    from densefeat.core import save_image
    from synth import scene

    lines = []
    for g in range(3):
        img = scene((48, 64), 50 + g)
        for j in range(2):
            save_image(tmp_path / f"g{g}_{j}.png", img)
            lines.append(f"g{g}_{j}.png\t{g}")
    (tmp_path / "m.tsv").write_text("\n".join(lines) + "\n")
    save_image(tmp_path / "t.png", scene((48, 64), 999))
    (tmp_path / "train.tsv").write_text("t.png\n")
    cfg = load_config(small_config(tmp_path, tmp_path / "train.tsv"))
    res = evaluate_retrieval(tmp_path / "m.tsv", cfg)
    assert res.mAP == 1.0
    assert res.mean_n > 0 and not res.warnings


def test_evaluate_retrieval_on_near_duplicates(dataset, tmp_path):
    data, train = dataset
    cfg = load_config(small_config(data.parent, train))
    res = evaluate_retrieval(data, cfg)
    assert res.mAP is not None and 0.0 <= res.mAP <= 1.0
    assert res.mAP == pytest.approx(np.mean([a for _, a in res.aps]))
    assert len(res.counts) == 12
    report = format_report(res, read_manifest(data))
    assert report.startswith("# mAP\t")
    assert report.count("\n") == 3 + 4


def test_overlap_warning(dataset):
    data, _ = dataset
    cfg = load_config(small_config(data.parent, data))
    res = evaluate_retrieval(data, cfg)
    assert any("also appear" in w for w in res.warnings)


def test_missing_codebook_source_is_config_error(dataset):
    data, _ = dataset
    cfg = parse_config_dict({"pipeline": {"target_area": "0"}})
    with pytest.raises(ConfigError):
        evaluate_retrieval(data, cfg)


def test_unreadable_image_named(tmp_path):
    (tmp_path / "m.tsv").write_text("nope.png\t0\n")
    (tmp_path / "train.tsv").write_text("nope.png\n")
    cfg = load_config(small_config(tmp_path, tmp_path / "train.tsv"))
    with pytest.raises(InputError, match="nope.png"):
        evaluate_retrieval(tmp_path / "m.tsv", cfg)


def test_codebook_bundle_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    descs = [rng.random((200, 128)) * 50 for _ in range(2)]
    cfg = parse_config_dict({"pipeline": {"k": "4", "seed": "2"}})
    cb, pca = train_codebook_bundle(descs, cfg)
    save_codebook_bundle(tmp_path / "c.cbk", cb, pca)
    cb2, pca2 = load_codebook_bundle(tmp_path / "c.cbk")
    assert cb2.seed == 2 and cb2.k == 4
    assert np.allclose(cb2.centroids, cb.centroids, atol=1e-6)
    assert np.allclose(pca2.rotation, pca.rotation, atol=1e-6)
    with pytest.raises(InputError):
        train_codebook_bundle([descs[0][:100]], cfg)
    with pytest.raises(InputError):
        load_codebook_bundle(tmp_path / "nothing.cbk")


def write_spec(root, train, values="4,8,12,16"):
    spec = root / "sweep.ini"
    spec.write_text(
        f"[sweep]\ndetector = dense\nparam = dense.delta_xy\nvalues = {values}\n"
        f"[pipeline]\ntarget_area = 0\npatch_size = 21\nk = 8\npca = false\ntrain_manifest = {train.name}\n"
        "[dense]\nn_scales = 2\n",
        encoding="utf-8",
    )
    return spec


def test_sweep_rows_and_determinism(dataset):
    data, train = dataset
    spec = read_sweep_spec(write_spec(data.parent, train))
    rows = run_sweep(data, spec)
    assert [r[0] for r in rows] == ["4", "8", "12", "16"]
    ns = [r[1] for r in rows]
    assert all(a > b for a, b in zip(ns, ns[1:]))
    text = format_sweep(rows, spec)
    assert text.splitlines()[0] == "dense.delta_xy\tN\tmAP"
    assert format_sweep(run_sweep(data, spec), spec) == text
    one = read_sweep_spec(write_spec(data.parent, train, "8"))
    assert len(run_sweep(data, one)) == 1


def test_sweep_spec_errors(tmp_path):
    bad = tmp_path / "s.ini"
    for text in (
        "[pipeline]\nk = 4\n",
        "[sweep]\nparam = delta_xy\nvalues = 1\n",
        "[sweep]\nparam = dense.delta_xy\nvalues =\n",
        "[sweep]\nparam = dense.delta_xy\nvalues = 4,x\n",
        "[sweep]\nparam = dense.delta_xy\nvalues = 4\ncolour = red\n",
    ):
        bad.write_text(text)
        with pytest.raises(ConfigError):
            read_sweep_spec(bad)


def test_config_errors(tmp_path):
    p = tmp_path / "c.ini"
    for text in ("[pipeline]\nkk = 3\n", "[bogus]\na = 1\n", "[pipeline]\nk = three\n", "[detector]\nname = sift\n", "[dense]\ndelta_xy = 0\n"):
        p.write_text(text)
        with pytest.raises(ConfigError):
            load_config(p)
    p.write_text("[pipeline]\ncodebook = cb/x.cbk\n")
    assert load_config(p).pipeline.codebook == str(tmp_path / "cb" / "x.cbk")
