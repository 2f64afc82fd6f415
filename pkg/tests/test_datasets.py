import pytest

from _helpers import REPO, raw_data_dir
from maxent_debias.datasets import adult_schema, compas_small_schema, prepare_adult, prepare_compas_small
from maxent_debias.io import frame_to_dataset, load_schema
from maxent_debias.metrics import representation_rate, statistical_rate

ADULT_TRAIN = (
    "39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Not-in-family, White, Male, 2174, 0, 40,"
    " United-States, <=50K\n"
    "17, Private, 1, 11th, 7, Never-married, ?, Own-child, Black, Female, 0, 0, 20, ?, <=50K\n"
    "\n"
)
ADULT_TEST = (
    "|1x3 Cross validator\n"
    "73, Private, 1, Preschool, 1, Widowed, ?, Unmarried, Asian-Pac-Islander, Female, 0, 0, 10, China, >50K.\n"
)

COMPAS_HEADER = "sex,race,age_cat,priors_count,c_charge_degree,two_year_recid,days_b_screening_arrest,is_recid,score_text\n"
COMPAS_ROWS = [
    "Male,African-American,Less than 25,0,F,1,0,1,Low",
    "Female,Caucasian,25 - 45,3,M,0,-30,0,High",
    "Male,Caucasian,Greater than 45,4,F,0,31,0,Low",  # screening too late
    "Male,Hispanic,25 - 45,1,F,0,0,0,Low",  # race outside the two groups
    "Male,Caucasian,25 - 45,1,O,0,0,0,Low",  # ordinary offence
    "Male,Caucasian,25 - 45,1,F,0,0,-1,Low",  # unknown recidivism
    "Male,Caucasian,25 - 45,1,F,0,0,0,N/A",  # no score
    "Female,African-American,Greater than 45,12,F,1,,1,Medium",  # missing screening gap
]


class TestAdultRecipe:
    def test_buckets_and_labels(self, tmp_path):
        (tmp_path / "a.data").write_text(ADULT_TRAIN)
        (tmp_path / "a.test").write_text(ADULT_TEST)
        frame = prepare_adult(tmp_path / "a.data", tmp_path / "a.test")
        assert frame.to_dict("records") == [
            {"sex": "Male", "race": "White", "age": "30-39", "education_years": ">12", "income": "<=50K"},
            {"sex": "Female", "race": "Non-White", "age": "10-19", "education_years": "7", "income": "<=50K"},
            {"sex": "Female", "race": "Non-White", "age": "70+", "education_years": "<6", "income": ">50K"},
        ]
        ds, errors = frame_to_dataset(adult_schema(), frame)
        assert errors == [] and ds.N == 3

    def test_recipe_file_matches_builtin(self):
        assert load_schema(REPO / "recipes" / "adult" / "schema.json") == adult_schema()
        assert load_schema(REPO / "recipes" / "compas_small" / "schema.json") == compas_small_schema()


class TestCompasRecipe:
    def test_filters_and_buckets(self, tmp_path):
        (tmp_path / "c.csv").write_text(COMPAS_HEADER + "\n".join(COMPAS_ROWS) + "\n")
        frame = prepare_compas_small(tmp_path / "c.csv")
        assert frame.to_dict("records") == [
            {"sex": "Male", "race": "African-American", "age": "<25", "priors": "0",
             "charge_degree": "F", "two_year_recid": "1"},
            {"sex": "Female", "race": "Caucasian", "age": "25-45", "priors": "1-3",
             "charge_degree": "M", "two_year_recid": "0"},
        ]
        ds, _ = frame_to_dataset(compas_small_schema(), frame)
        assert ds.N == 2


def _raw(name):
    path = raw_data_dir() / name
    if not path.exists():
        pytest.skip(f"{path} not found; run scripts/fetch_data.py")
    return path


class TestRealData:
    def test_adult_counts(self):
        frame = prepare_adult(_raw("adult.data"), _raw("adult.test"))
        ds, errors = frame_to_dataset(adult_schema(), frame)
        assert errors == [] and ds.N == 48842
        assert representation_rate(ds) == pytest.approx(0.49, abs=0.02)
        assert statistical_rate(ds) == pytest.approx(0.36, abs=0.02)

    def test_compas_counts(self):
        frame = prepare_compas_small(_raw("compas-scores-two-years.csv"))
        ds, errors = frame_to_dataset(compas_small_schema(), frame)
        assert errors == [] and ds.N == 5278
        assert representation_rate(ds) == pytest.approx(0.24, abs=0.02)
        assert statistical_rate(ds) == pytest.approx(0.73, abs=0.03)
