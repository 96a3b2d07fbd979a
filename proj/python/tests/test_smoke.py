import tempfile

import pytest

import formlab

HALF = [0.5] * 12


def test_constants():
    assert formlab.GENOTYPE_SIZE == 12
    assert formlab.FEATURE_DIM == 120
    names = formlab.parameter_names()
    assert names[6] == "food_base_rate"
    assert len(names) == 12


def test_validate_clamps():
    u, physical, clamped = formlab.validate_genotype([1.5] + HALF[1:])
    assert u[0] == 1.0
    assert clamped == [0]
    assert len(physical) == 12
    with pytest.raises(ValueError):
        formlab.validate_genotype([float("nan")] + HALF[1:])


def test_reference_render():
    g = formlab.grow(HALF, 7)
    assert g.cell_count == 4096
    assert g.steps_run == 238
    img = formlab.render(g)
    assert img.hash() == "f03de59bb87be18c"
    assert not img.is_empty()
    assert img.pgm().startswith(b"P5")
    assert len(img.pixels) == 256 * 256
    assert len(formlab.extract_features(img)) == 120


def test_no_food_is_empty():
    u = list(HALF)
    u[6] = 0.0
    assert formlab.render(formlab.grow(u, 1)).is_empty()


def test_embeddings():
    pts = [[float(i), float(i % 3), float(i % 5)] for i in range(30)]
    assert len(formlab.pca2(pts)) == 30
    layout = formlab.tsne(pts, perplexity=5.0, iterations=50, seed=1)
    assert layout == formlab.tsne(pts, perplexity=5.0, iterations=50, seed=1)


def test_sweep_genotypes():
    cells = formlab.sweep_genotypes(HALF, 6, 8, resolution=3)
    assert len(cells) == 9
    assert cells[0][6] == 0.0 and cells[2][6] == 1.0 and cells[8][8] == 1.0


def test_store_roundtrip():
    with tempfile.TemporaryDirectory() as root:
        store = formlab.Store(root, resolution=128)
        rid = store.add(HALF, 3)
        assert len(store) == 1
        store.judge(rid, rank=7, category="blob")
        rec = store.record(rid)
        assert rec["rank"] == 7 and rec["category"] == "blob"
        assert store.taxonomy() == ["blob"]
        assert store.verify() == []
        assert store.export_csv().startswith("id,")
        with pytest.raises(ValueError):
            store.judge(rid, rank=0)
        with pytest.raises(RuntimeError):
            store.record(99)
