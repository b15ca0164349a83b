import pytest

from qnetopt.errors import LayoutError
from qnetopt.layout import System, SystemLayout


def test_basic_queries(two_step):
    assert two_step.labels == ("0", "1", "2", "3")
    assert two_step.dim == 16
    assert two_step.num_steps == 2
    assert two_step.inputs(2) == ("2",)
    assert two_step.outputs(1) == ("1",)
    assert two_step.steps() == [(("0",), ("1",)), (("2",), ("3",))]
    assert two_step.dim_of(["0", "3"]) == 4


@pytest.mark.parametrize("specs", [
    [("a", 2, "in", 1), ("a", 2, "out", 1)],
    [("a", 0, "in", 1)],
    [("a", 2, "sideways", 1)],
    [("a", 2, "in", 1), ("b", 2, "out", 3)],
])
def test_invalid_layouts_rejected(specs):
    with pytest.raises(LayoutError):
        SystemLayout.of(*specs)


def test_sub_layout_compacts_steps(two_step):
    sub = two_step.sub(["2", "3"])
    assert sub.num_steps == 1
    assert sub.system("2").step == 1


def test_relabel_and_roles(two_step):
    r = two_step.relabel({"0": "x"})
    assert r.labels[0] == "x"
    flipped = two_step.with_roles({"0": ("out", 1)})
    assert flipped.system("0").role == "out"


def test_dict_round_trip(two_step):
    assert SystemLayout.from_dict(two_step.to_dict()) == two_step


def test_from_dict_reports_field():
    with pytest.raises(LayoutError, match=r"systems\[1\]"):
        SystemLayout.from_dict({"systems": [{"label": "a", "dim": 2}, {"label": "b", "dim": -1}]})


def test_system_is_hashable():
    assert len({System("a", 2, "in", 1), System("a", 2, "in", 1)}) == 1
