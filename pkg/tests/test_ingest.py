import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netgraph_event.errors import ConfigError, DataError, EmptyInputError, SchemaError
from netgraph_event.ingest import (
    EventLog,
    LogRecord,
    SynthConfig,
    fill_missing,
    ingest_logs,
    load_panel,
    panel_to_records,
    read_events_csv,
    read_log_csv,
    save_panel,
    synthesize,
    write_events_csv,
    write_log_csv,
)


def rec(ts, iface="a", *attrs):
    return LogRecord(ts, iface, tuple(attrs) if attrs else (1.0, 2.0, 3.0, 4.0))


class TestIngestLogs:
    def test_two_consecutive_records(self):
        panel = ingest_logs([rec(0), rec(300)], 300)
        assert (panel.num_ticks, panel.n, panel.F) == (2, 1, 4)
        assert not panel.missing_mask.any()

    def test_gap_is_flagged_missing(self):
        panel = ingest_logs([rec(0), rec(600)], 300)
        assert panel.num_ticks == 3
        assert panel.missing_mask[:, 0].tolist() == [False, True, False]

    def test_duplicates_in_bucket_are_averaged(self):
        panel = ingest_logs([rec(10, "a", 2.0), rec(200, "a", 4.0)], 300)
        assert panel.values[0, 0, 0] == 3.0

    def test_interfaces_sorted_and_aligned(self):
        panel = ingest_logs([rec(0, "b", 1.0), rec(0, "a", 2.0), rec(300, "b", 3.0)], 300)
        assert panel.interface_ids == ["a", "b"]
        assert panel.values[:, 1, 0].tolist() == [1.0, 3.0]
        assert panel.missing_mask[1, 0]

    def test_ticks_on_interval_grid(self):
        panel = ingest_logs([rec(1010), rec(1700)], 300)
        assert panel.ticks.tolist() == [900, 1200, 1500]
        assert panel.tick_index(1499) == 1

    def test_schema_error(self):
        with pytest.raises(SchemaError):
            ingest_logs([rec(0, "a", 1.0), rec(0, "b", 1.0, 2.0)])

    def test_empty_input(self):
        with pytest.raises(EmptyInputError):
            ingest_logs([])


class TestFillMissing:
    def test_forward_fill(self, panel_factory):
        out = fill_missing(panel_factory([1.0, np.nan, np.nan]))
        assert out.values[:, 0, 0].tolist() == [1.0, 1.0, 1.0]

    def test_leading_gap_is_zero(self, panel_factory):
        out = fill_missing(panel_factory([np.nan, 5.0]))
        assert out.values[:, 0, 0].tolist() == [0.0, 5.0]

    def test_observed_panel_unchanged(self, panel_factory):
        values = np.arange(24, dtype=float).reshape(4, 3, 2)
        out = fill_missing(panel_factory(values))
        np.testing.assert_array_equal(out.values, values)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.one_of(st.none(), st.floats(-1e6, 1e6)), min_size=1, max_size=30))
    def test_matches_scalar_forward_fill(self, seq):
        from conftest import make_panel

        values = [np.nan if v is None else v for v in seq]
        out = fill_missing(make_panel(values)).values[:, 0, 0].tolist()
        last, expect = 0.0, []
        for v in seq:
            last = last if v is None else v
            expect.append(last)
        assert out == expect


class TestSynthesize:
    def test_deterministic(self):
        cfg = SynthConfig(n_interfaces=4, F=2, num_ticks=1500, num_events=5, seed=1)
        a, ea = synthesize(cfg)
        b, eb = synthesize(cfg)
        assert a.values.tobytes() == b.values.tobytes()
        assert ea.entries == eb.entries

    def test_no_events_is_background(self):
        panel, events = synthesize(SynthConfig(n_interfaces=3, F=2, num_ticks=500, num_events=0))
        assert len(events) == 0
        assert panel.values.shape == (500, 3, 2)

    def test_event_separation(self):
        panel, events = synthesize(SynthConfig(num_events=5, num_ticks=4000, seed=3))
        ticks = sorted(panel.tick_index(ts) for ts in events.timestamps)
        assert len(ticks) == 5
        assert min(np.diff(ticks)) >= 144

    def test_events_fall_between_ticks(self):
        panel, events = synthesize(SynthConfig(num_events=4, num_ticks=2000, seed=2))
        for ts in events.timestamps:
            assert (ts - panel.ticks[0]) % panel.tick_interval_s != 0

    def test_precursor_confined_to_lead_window(self):
        # Same seed, different strength: the difference isolates the injected ramp.
        base = dict(n_interfaces=6, F=3, num_ticks=2000, num_events=6, anomaly_lead_ticks=48, seed=4)
        strong, events = synthesize(SynthConfig(precursor_strength=1.0, **base))
        weak, _ = synthesize(SynthConfig(precursor_strength=0.5, **base))
        diff = np.abs(strong.values - weak.values).max(axis=(1, 2))
        expected = np.zeros(strong.num_ticks, dtype=bool)
        for ts in events.timestamps:
            e = strong.tick_index(ts)
            expected[e - 47 : e + 1] = True
        assert (diff[~expected] == 0).all()
        assert (diff[expected] > 0).all()

    def test_non_negative_and_complete(self):
        panel, _ = synthesize(SynthConfig(num_ticks=1000, num_events=3))
        assert (panel.values >= 0).all()
        assert not panel.missing_mask.any()

    @pytest.mark.parametrize(
        "kwargs",
        [dict(num_events=50, num_ticks=4000), dict(anomaly_lead_ticks=100), dict(n_interfaces=1, num_events=1),
         dict(num_events=-1), dict(noise_scale=0)],
    )
    def test_invalid_configs(self, kwargs):
        with pytest.raises(ConfigError):
            SynthConfig(**kwargs)


class TestPersistence:
    def test_panel_roundtrip(self, tmp_path, panel_factory):
        values = np.arange(12, dtype=float).reshape(3, 2, 2)
        values[1, 0] = np.nan
        panel = panel_factory(values, t0=600)
        save_panel(panel, tmp_path / "p")
        back = load_panel(tmp_path / "p")
        np.testing.assert_array_equal(back.missing_mask, panel.missing_mask)
        np.testing.assert_array_equal(back.ticks, panel.ticks)
        np.testing.assert_allclose(back.values[~panel.missing_mask], values[~panel.missing_mask])
        assert back.interface_ids == panel.interface_ids

    def test_missing_panel_dir(self, tmp_path):
        with pytest.raises(DataError):
            load_panel(tmp_path / "absent")

    def test_log_csv_roundtrip(self, tmp_path):
        records = [rec(0, "a", 1.5, 2.0), rec(300, "b", 0.1, 1e-9)]
        write_log_csv(records, tmp_path / "logs.csv")
        assert list(read_log_csv(tmp_path / "logs.csv")) == records

    def test_panel_records_reingest(self):
        panel, _ = synthesize(SynthConfig(n_interfaces=3, F=2, num_ticks=50, num_events=0))
        again = ingest_logs(panel_to_records(panel), panel.tick_interval_s)
        np.testing.assert_array_equal(again.values, panel.values)

    def test_log_csv_bad_header(self, tmp_path):
        (tmp_path / "x.csv").write_text("time,iface\n1,a\n")
        with pytest.raises(SchemaError):
            list(read_log_csv(tmp_path / "x.csv"))

    def test_log_csv_ragged_row(self, tmp_path):
        (tmp_path / "x.csv").write_text("timestamp,interface_id,attr_0\n1,a,2.0,3.0\n")
        with pytest.raises(SchemaError):
            list(read_log_csv(tmp_path / "x.csv"))

    def test_events_roundtrip(self, tmp_path):
        events = EventLog([(900, "net"), (300, "net")])
        write_events_csv(events, tmp_path / "e.csv")
        back = read_events_csv(tmp_path / "e.csv")
        assert back.entries == [(300, "net"), (900, "net")]
