"""Readers, writers, and the value-exact metrics round trip."""

import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proxsplit.cli import _write_csv_matrix, _write_libsvm
from proxsplit.core import ResidualReport
from proxsplit.io import (METRICS_HEADER, MetricsLog, read_dense_csv,
                          read_libsvm, read_metrics_csv, write_metrics_csv)


class TestDenseCsv:
    def test_basic(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("1,2\n3,4\n")
        assert np.array_equal(read_dense_csv(p), [[1.0, 2.0], [3.0, 4.0]])

    def test_header_autodetected(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("colA,colB\n1,2\n3,4\n")
        assert np.array_equal(read_dense_csv(p), [[1.0, 2.0], [3.0, 4.0]])

    def test_crlf_accepted(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_bytes(b"1,2\r\n3,4\r\n")
        assert np.array_equal(read_dense_csv(p), [[1.0, 2.0], [3.0, 4.0]])

    def test_empty_file_rejected(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("")
        with pytest.raises(ValueError, match="no numeric data"):
            read_dense_csv(p)

    def test_ragged_row_line_number(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("1,2\n3,4,5\n")
        with pytest.raises(ValueError, match=r":2.*ragged"):
            read_dense_csv(p)

    def test_bad_cell_line_number(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("1,2\n3,x\n")
        with pytest.raises(ValueError, match=r":2.*'x'"):
            read_dense_csv(p)

    def test_large_round_trip_bitwise(self, tmp_path, rng):
        mat = rng.standard_normal((1000, 1000))
        p = tmp_path / "big.csv"
        _write_csv_matrix(p, mat)
        back = read_dense_csv(p)
        assert np.array_equal(back, mat)


class TestLibsvm:
    def test_basic(self, tmp_path):
        p = tmp_path / "d.libsvm"
        p.write_text("+1 1:0.5 3:2\n")
        feats, labels = read_libsvm(p, dim=3)
        assert np.array_equal(feats, [[0.5, 0.0, 2.0]])
        assert labels[0] == 1.0

    def test_label_only_line(self, tmp_path):
        p = tmp_path / "d.libsvm"
        p.write_text("-1\n")
        feats, labels = read_libsvm(p, dim=2)
        assert np.array_equal(feats, [[0.0, 0.0]])
        assert labels[0] == -1.0

    def test_dim_inferred(self, tmp_path):
        p = tmp_path / "d.libsvm"
        p.write_text("1 2:1\n-1 4:3\n")
        feats, _ = read_libsvm(p)
        assert feats.shape == (2, 4)

    def test_index_zero_rejected(self, tmp_path):
        p = tmp_path / "d.libsvm"
        p.write_text("1 0:2\n")
        with pytest.raises(ValueError, match=r":1.*1-based"):
            read_libsvm(p)

    def test_malformed_token_line_number(self, tmp_path):
        p = tmp_path / "d.libsvm"
        p.write_text("1 1:1\n1 2:zz\n")
        with pytest.raises(ValueError, match=r":2.*'2:zz'"):
            read_libsvm(p)

    def test_round_trip(self, tmp_path, rng):
        feats = rng.standard_normal((50, 7))
        feats[rng.random((50, 7)) < 0.4] = 0.0
        feats[:, 0] += 1.0  # keep at least one nonzero per row
        labels = np.where(rng.random(50) < 0.5, -1.0, 1.0)
        p = tmp_path / "d.libsvm"
        _write_libsvm(p, feats, labels)
        back_f, back_l = read_libsvm(p, dim=7)
        assert np.array_equal(back_f, feats)
        assert np.array_equal(back_l, labels)


class TestMetrics:
    def test_empty_log_header_only(self, tmp_path):
        p = tmp_path / "m.csv"
        write_metrics_csv(MetricsLog(), p)
        assert p.read_text() == METRICS_HEADER + "\n"

    def test_row_round_trip(self, tmp_path):
        log = MetricsLog()
        log.append(ResidualReport(k=3, residual_norm=1.25e-7,
                                  objective=0.1 + 0.2, dist_to_ref=None,
                                  wall_time_s=None, epoch=1.5))
        p = tmp_path / "m.csv"
        write_metrics_csv(log, p)
        back = read_metrics_csv(p)
        row = back.rows[0]
        assert row.k == 3
        assert row.residual_norm == 1.25e-7
        assert row.objective == 0.1 + 0.2
        assert row.dist_to_ref is None and row.wall_time_s is None
        assert row.epoch == 1.5

    @settings(max_examples=200, deadline=None)
    @given(st.floats(allow_nan=False, allow_infinity=False),
           st.floats(allow_nan=False, allow_infinity=False, min_value=0))
    def test_seventeen_digit_round_trip(self, obj, resid):
        assert float(format(obj, ".17g")) == obj
        assert float(format(resid, ".17g")) == resid

    def test_many_rows_fast(self, tmp_path):
        log = MetricsLog()
        for k in range(10_000):
            log.append(ResidualReport(k=k, residual_norm=1.0 / (k + 1),
                                      objective=float(k), dist_to_ref=0.5,
                                      wall_time_s=0.25, epoch=float(k)))
        p = tmp_path / "m.csv"
        t0 = time.perf_counter()
        write_metrics_csv(log, p)
        assert time.perf_counter() - t0 < 1.0
        assert len(read_metrics_csv(p).rows) == 10_000

    def test_strictly_increasing_k_enforced(self):
        log = MetricsLog()
        log.append(ResidualReport(k=1, residual_norm=0.0))
        with pytest.raises(ValueError, match="increasing"):
            log.append(ResidualReport(k=1, residual_norm=0.0))
