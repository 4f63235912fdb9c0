from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from embedded_eigen.rational import (
    RationalParseError,
    format_rational,
    parse_rational,
    parse_rational_list,
)


class TestParse:
    def test_integer_and_fraction(self):
        assert parse_rational("3") == 3
        assert parse_rational("-9/4") == Fraction(-9, 4)
        assert parse_rational(" 6/4 ") == Fraction(3, 2)

    def test_zero_denominator_reports_column(self):
        with pytest.raises(RationalParseError) as exc:
            parse_rational("2/0")
        assert exc.value.column == 3

    def test_list_columns(self):
        with pytest.raises(RationalParseError) as exc:
            parse_rational_list("2,-2,5/0")
        assert exc.value.column == 8

    @pytest.mark.parametrize("bad", ["", "1.5", "a/2", "1//2", 0.5, True])
    def test_rejects(self, bad):
        with pytest.raises(RationalParseError):
            parse_rational(bad)

    def test_empty_list_entry(self):
        with pytest.raises(RationalParseError):
            parse_rational_list("1,,2")


@given(st.fractions())
def test_format_round_trip(q):
    assert parse_rational(format_rational(q)) == q
