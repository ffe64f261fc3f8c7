import math

import numpy as np
import pandas as pd
import pytest

from bhpsensor import synthgen
from bhpsensor.errors import DuplicateTimestamp, EmptyFile, InconsistentDepth, MissingColumn
from bhpsensor.welldata import COLUMNS, FieldDataset, WellRecord, load_csv, parse_flags, save_csv

HEADER = ",".join(COLUMNS)


def _row(day, bhp="400.5", whp="200", depth="4800", choke="60", q_oil="3000", hours="24", flags=""):
    return f"W1,2020-01-{day:02d},{bhp},90,{whp},50,40,40,{choke},{q_oil},800,300,0,{depth},{hours},{flags}"


def _write(tmp_path, lines, name="field.csv"):
    p = tmp_path / name
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return p


class TestLoad:
    def test_three_rows_one_well(self, tmp_path):
        ds = load_csv(_write(tmp_path, [HEADER, _row(1), _row(2), _row(3)]))
        assert ds.well_ids == ["W1"]
        assert len(ds) == 3
        recs = list(ds.records())
        assert isinstance(recs[0], WellRecord)
        assert recs[0].bhp == 400.5

    def test_empty_bhp_cell_is_flagged_not_zero(self, tmp_path):
        ds = load_csv(_write(tmp_path, [HEADER, _row(1, bhp="")]))
        rec = next(ds.records())
        assert rec.bhp is None
        assert "bhp:null" in rec.quality_flags
        assert math.isnan(ds.frame["bhp"].iloc[0])

    def test_unparseable_cell_sets_error_flag(self, tmp_path):
        ds = load_csv(_write(tmp_path, [HEADER, _row(1, whp="abc")]))
        assert parse_flags(ds.frame["quality_flags"].iloc[0]) == {"whp": "error"}

    def test_negative_rate_and_bad_hours_flagged(self, tmp_path):
        ds = load_csv(_write(tmp_path, [HEADER, _row(1, q_oil="-5", hours="30")]))
        flags = parse_flags(ds.frame["quality_flags"].iloc[0])
        assert flags == {"q_oil": "error", "open_hours": "error"}

    def test_choke_above_100_kept_with_warning(self, tmp_path):
        ds = load_csv(_write(tmp_path, [HEADER, _row(1, choke="125")]))
        assert ds.frame["choke_aperture"].iloc[0] == 125.0
        assert parse_flags(ds.frame["quality_flags"].iloc[0]) == {"choke_aperture": "warn"}

    def test_duplicate_day_rejected(self, tmp_path):
        with pytest.raises(DuplicateTimestamp):
            load_csv(_write(tmp_path, [HEADER, _row(1), _row(1)]))

    def test_depth_change_rejected(self, tmp_path):
        with pytest.raises(InconsistentDepth):
            load_csv(_write(tmp_path, [HEADER, _row(1), _row(2, depth="4801")]))

    def test_missing_column(self, tmp_path):
        with pytest.raises(MissingColumn):
            load_csv(_write(tmp_path, [HEADER.replace(",whp,", ",xhp,"), _row(1)]))

    def test_empty_file(self, tmp_path):
        with pytest.raises(EmptyFile):
            load_csv(_write(tmp_path, [""]))

    def test_schema_mapping(self, tmp_path):
        header = HEADER.replace(",bhp,", ",PDG_P,")
        ds = load_csv(_write(tmp_path, [header, _row(1)]), schema={"bhp": "PDG_P"})
        assert ds.frame["bhp"].iloc[0] == 400.5

    def test_rows_sorted_per_well(self, tmp_path):
        ds = load_csv(_write(tmp_path, [HEADER, _row(3), _row(1), _row(2)]))
        assert list(ds.frame["date"].dt.day) == [1, 2, 3]


class TestRoundTrip:
    def test_generated_field_round_trips_exactly(self, tmp_path, field1_faulted):
        _, ds, _ = field1_faulted
        path = tmp_path / "f1.csv"
        save_csv(ds, path)
        back = load_csv(path, field_id=ds.field_id)
        assert back.equals(ds)

    def test_absent_bhp_written_as_empty_cell(self, tmp_path):
        ds = load_csv(_write(tmp_path, [HEADER, _row(1, bhp="")]))
        out = tmp_path / "out.csv"
        save_csv(ds, out)
        line = out.read_text().splitlines()[1]
        assert line.split(",")[2] == ""
        assert load_csv(out, field_id=ds.field_id).equals(ds)

    def test_zero_well_dataset_is_header_only(self, tmp_path):
        ds = load_csv(_write(tmp_path, [HEADER]))
        out = tmp_path / "empty.csv"
        save_csv(ds, out)
        assert out.read_text().splitlines() == [HEADER]
        assert len(load_csv(out)) == 0

    def test_noise_free_values_survive_repr(self, tmp_path):
        ds, _ = synthgen.generate(synthgen.GenConfig(n_wells=2, n_days=40, seed=3, noise_sigma=0.0))
        save_csv(ds, tmp_path / "a.csv")
        back = load_csv(tmp_path / "a.csv", field_id=ds.field_id)
        assert np.array_equal(back.frame["bhp"].to_numpy(), ds.frame["bhp"].to_numpy())


def test_dataset_is_sorted_and_reindexed():
    frame = pd.DataFrame({"well_id": ["B", "A"], "date": ["2020-01-02", "2020-01-01"]})
    ds = FieldDataset.from_frame("f", frame)
    assert ds.well_ids == ["A", "B"]
    assert list(ds.frame.index) == [0, 1]
