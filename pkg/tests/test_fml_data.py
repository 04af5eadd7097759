import numpy as np
import pytest

from uavfml.exceptions import MalformedRow, UnknownColumn
from uavfml.fml.data import label_histograms, load_csv_dataset, modality_owners, synth_multimodal_dataset
from uavfml.scenario import default_scenario


@pytest.fixture(scope="module")
def cfg():
    return default_scenario(0, num_uavs=6, num_targets=2, samples_per_uav=[400.0] * 6)


class TestSynthetic:
    def test_layout(self, cfg):
        ds = synth_multimodal_dataset(cfg, seed=1)
        assert len(ds) == cfg.num_modalities
        assert ds[0].owners == [0, 2, 4] and ds[1].owners == [1, 3, 5]
        np.testing.assert_array_equal(ds[0].sizes, [400, 400, 400])
        assert ds[0].probe[0].shape == (cfg.probe_set_size, cfg.input_dim)
        # probe and test rows are the same samples across modalities
        np.testing.assert_array_equal(ds[0].probe[1], ds[1].probe[1])
        np.testing.assert_array_equal(ds[0].test[1], ds[1].test[1])

    def test_deterministic(self, cfg):
        a = synth_multimodal_dataset(cfg, seed=3, iid=False)
        b = synth_multimodal_dataset(cfg, seed=3, iid=False)
        for da, db in zip(a, b):
            for (Xa, ya), (Xb, yb) in zip(da.partitions, db.partitions):
                np.testing.assert_array_equal(Xa, Xb)
                np.testing.assert_array_equal(ya, yb)
        c = synth_multimodal_dataset(cfg, seed=4, iid=False)
        assert not np.array_equal(a[0].partitions[0][0], c[0].partitions[0][0])

    def test_iid_is_balanced(self, cfg):
        hist = label_histograms(synth_multimodal_dataset(cfg, seed=0), cfg.num_classes)
        assert hist.shape == (6, cfg.num_classes)
        np.testing.assert_allclose(hist, 1 / cfg.num_classes, atol=0.08)

    def test_large_alpha_close_to_uniform(self, cfg):
        hist = label_histograms(synth_multimodal_dataset(cfg.replace(dirichlet_alpha=1e6), seed=0, iid=False),
                                cfg.num_classes)
        np.testing.assert_allclose(hist, 1 / cfg.num_classes, atol=0.05)

    def test_small_alpha_is_skewed(self, cfg):
        hist = label_histograms(synth_multimodal_dataset(cfg.replace(dirichlet_alpha=0.1), seed=0, iid=False),
                                cfg.num_classes)
        assert np.mean(hist.max(axis=1)) > 0.5

    def test_partition_sizes_exact_in_noniid(self, cfg):
        ds = synth_multimodal_dataset(cfg.replace(dirichlet_alpha=0.3), seed=2, iid=False)
        np.testing.assert_array_equal(ds[1].sizes, [400, 400, 400])

    def test_single_modality(self, cfg):
        ds = synth_multimodal_dataset(cfg, seed=0, modalities=[1])
        assert len(ds) == 1 and ds[0].owners == list(range(6))

    def test_owners(self):
        assert modality_owners(5, 2) == [[0, 2, 4], [1, 3]]


CSV = "a,b,c,label\n1,2,5,0\n2,2,6,1\n3,2,7,0\n"


class TestCSV:
    def test_three_rows(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text(CSV)
        ds = load_csv_dataset(path, [["a", "b"], ["c"]], "label")
        assert len(ds) == 2
        assert len(ds[0].partitions[0][1]) == 3 - 1 and len(ds[0].test[1]) == 1
        assert ds[0].columns == ["a", "b"]

    @pytest.mark.parametrize("n, n_test", [(10, 3), (7, 3), (1, 1)])
    def test_split_sizes(self, tmp_path, n, n_test):
        path = tmp_path / "d.csv"
        path.write_text("x,label\n" + "".join(f"{i},{i % 2}\n" for i in range(n)))
        ds = load_csv_dataset(path, [["x"]], "label")
        assert len(ds[0].test[1]) == n_test and ds[0].sizes.sum() == n - n_test

    def test_zscore_and_constant_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text(CSV)
        ds = load_csv_dataset(path, [["a", "b"]], "label")
        X = np.vstack([ds[0].partitions[0][0], ds[0].test[0]])
        assert not X[:, 1].any()
        np.testing.assert_allclose(np.sort(X[:, 0]), [-np.sqrt(1.5), 0.0, np.sqrt(1.5)])

    def test_labels_remapped(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x,label\n1,7\n2,3\n3,7\n4,3\n")
        ds = load_csv_dataset(path, [["x"]], "label", train_fraction=1.0)
        assert set(ds[0].partitions[0][1]) == {0, 1}

    def test_round_robin_owners(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x,label\n" + "".join(f"{i},{i % 2}\n" for i in range(20)))
        ds = load_csv_dataset(path, [["x"]], "label", num_uavs=3)
        assert ds[0].owners == [0, 1, 2]
        np.testing.assert_array_equal(ds[0].sizes, [5, 5, 4])

    def test_malformed_row(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,label\n1,0\n2\n")
        with pytest.raises(MalformedRow) as info:
            load_csv_dataset(path, [["a"]], "label")
        assert info.value.line == 3

    def test_non_numeric(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,label\n1,0\nx,1\n")
        with pytest.raises(MalformedRow):
            load_csv_dataset(path, [["a"]], "label")

    def test_unknown_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text(CSV)
        with pytest.raises(UnknownColumn):
            load_csv_dataset(path, [["a", "z"]], "label")
