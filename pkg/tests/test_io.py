import json

import numpy as np
import pandas as pd
import pytest

from _helpers import random_dataset
from maxent_debias.domain import Dataset, DomainSchema
from maxent_debias.errors import ArityMismatch, EmptyDataset, ModelFormatError, UnknownCategory
from maxent_debias.io import (
    atomic_write_text,
    dataset_summary,
    dataset_to_raw_csv,
    encoded_csv,
    frame_to_dataset,
    is_encoded_csv,
    load_model,
    load_schema,
    model_from_dict,
    model_json,
    model_to_dict,
    read_encoded_csv,
    read_raw_csv,
    save_model,
    save_schema,
    values_to_csv,
    write_encoded_csv,
)
from maxent_debias.prior import mix_prior, reweight
from maxent_debias.solver import solve, target_marginal

SCHEMA = DomainSchema.build([
    {"name": "sex", "kind": "bit", "role": "protected", "categories": ["M", "F"]},
    {"name": "age", "kind": "onehot", "categories": ["young", "mid", "old"]},
    {"name": "hi", "kind": "bit", "role": "label", "categories": ["no", "yes"]},
])


@pytest.fixture
def model():
    rng = np.random.default_rng(0)
    ds = random_dataset(rng, SCHEMA, 40)
    w = reweight(ds, 0.9)
    return solve(mix_prior(0.5, w), target_marginal(ds, w, "balanced")).model


class TestRawTables:
    def test_encode_and_merge(self):
        frame = pd.DataFrame({"sex": ["M", "F", "M"], "age": ["mid", "old", "mid"], "hi": ["no", "yes", "no"]})
        ds, errors = frame_to_dataset(SCHEMA, frame)
        assert errors == [] and ds.N == 3 and len(ds) == 2
        assert ds.freqs.tolist() == [2, 1]

    def test_unknown_category_names_row_and_column(self):
        frame = pd.DataFrame({"sex": ["M", "F"], "age": ["mid", "ancient"], "hi": ["no", "yes"]})
        with pytest.raises(UnknownCategory, match=r"row 2, column 'age'"):
            frame_to_dataset(SCHEMA, frame)

    def test_skip_bad_rows(self):
        frame = pd.DataFrame({"sex": ["M", "X"], "age": ["mid", "old"], "hi": ["no", "yes"]})
        ds, errors = frame_to_dataset(SCHEMA, frame, skip_bad_rows=True)
        assert ds.N == 1 and [(e.row, e.column) for e in errors] == [(2, "sex")]

    def test_all_bad_rows(self):
        frame = pd.DataFrame({"sex": ["X"], "age": ["mid"], "hi": ["no"]})
        with pytest.raises(EmptyDataset):
            frame_to_dataset(SCHEMA, frame, skip_bad_rows=True)

    def test_missing_column(self):
        with pytest.raises(ArityMismatch):
            frame_to_dataset(SCHEMA, pd.DataFrame({"sex": ["M"]}))

    def test_na_is_a_plain_label(self, tmp_path):
        s = DomainSchema.build([{"name": "a", "kind": "onehot", "categories": ["N/A", "x"]}])
        (tmp_path / "t.csv").write_text("a\nN/A\nx\n")
        ds, _ = read_raw_csv(s, tmp_path / "t.csv")
        assert ds.N == 2 and len(ds) == 2

    def test_round_trip(self, tmp_path):
        ds = random_dataset(np.random.default_rng(1), SCHEMA, 20)
        (tmp_path / "raw.csv").write_text(dataset_to_raw_csv(ds))
        back, _ = read_raw_csv(SCHEMA, tmp_path / "raw.csv")
        assert back.N == ds.N
        for p, n in zip(ds.points, ds.freqs):
            assert back.frequency(p) == n

    def test_values_to_csv(self):
        text = values_to_csv(SCHEMA, [[1, 2, 0]])
        assert text == "sex,age,hi\nF,old,no\n"


class TestEncoded:
    def test_layout(self):
        ds = Dataset.from_values(SCHEMA, [[1, 2, 0], [1, 2, 0], [0, 0, 1]])
        assert encoded_csv(ds) == "sex,age=young,age=mid,age=old,hi,freq\n1,0,0,1,0,2\n0,1,0,0,1,1\n"

    def test_round_trip(self, tmp_path):
        ds = random_dataset(np.random.default_rng(2), SCHEMA, 25)
        path = write_encoded_csv(ds, tmp_path / "enc.csv")
        assert is_encoded_csv(path)
        back = read_encoded_csv(SCHEMA, path)
        np.testing.assert_array_equal(back.points, ds.points)
        np.testing.assert_array_equal(back.freqs, ds.freqs)

    def test_wrong_columns(self, tmp_path):
        (tmp_path / "e.csv").write_text("a,b,freq\n1,0,1\n")
        with pytest.raises(ArityMismatch):
            read_encoded_csv(SCHEMA, tmp_path / "e.csv")

    def test_summary(self):
        ds = Dataset.from_values(SCHEMA, [[1, 2, 0], [1, 2, 0], [0, 0, 1]])
        s = dataset_summary(ds)
        assert (s["N"], s["distinct_points"], s["d"]) == (3, 2, 5)
        assert s["blocks"]["age"] == {"young": 1, "mid": 0, "old": 2}


class TestFiles:
    def test_atomic_write_leaves_no_temp(self, tmp_path):
        atomic_write_text(tmp_path / "sub" / "f.txt", "hello")
        assert [p.name for p in (tmp_path / "sub").iterdir()] == ["f.txt"]

    def test_schema_round_trip(self, tmp_path):
        save_schema(SCHEMA, tmp_path / "s.json")
        assert load_schema(tmp_path / "s.json") == SCHEMA


class TestModelFiles:
    def test_exact_round_trip(self, model, tmp_path):
        path = save_model(model, tmp_path / "m.json", {"note": "x"})
        back = load_model(path)
        assert back.lam.tobytes() == model.lam.tobytes()
        assert back.theta.tobytes() == model.theta.tobytes()
        assert back.prior.weighted.weights.tobytes() == model.prior.weighted.weights.tobytes()
        assert back.dual_value == model.dual_value
        assert back.log_partition == model.log_partition

    def test_numbers_are_strings_with_17_digits(self, model):
        doc = model_to_dict(model)
        for s in doc["lambda"]:
            assert isinstance(s, str)
            mantissa = s.split("e")[0].lstrip("-").replace(".", "")
            assert len(mantissa) == 17

    def test_deterministic_text(self, model):
        assert model_json(model) == model_json(model)
        assert json.loads(model_json(model))["format"] == "maxent-debias-model"

    def test_corrupt(self, tmp_path):
        (tmp_path / "bad.json").write_text("{not json")
        with pytest.raises(ModelFormatError):
            load_model(tmp_path / "bad.json")

    def test_wrong_format(self):
        with pytest.raises(ModelFormatError):
            model_from_dict({"format": "other"})

    def test_bad_number(self, model):
        doc = model_to_dict(model)
        doc["lambda"][0] = "abc"
        with pytest.raises(ModelFormatError):
            model_from_dict(doc)

    def test_wrong_length(self, model):
        doc = model_to_dict(model)
        doc["theta"] = doc["theta"][:-1]
        with pytest.raises(ModelFormatError):
            model_from_dict(doc)
