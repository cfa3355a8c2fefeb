import pytest

from simpl.errors import DslSyntaxError
from simpl.sexpr import SAtom, SList, Symbol, read_all, to_datum


def test_atoms_and_positions():
    forms = read_all("42 3.5 #t #f foo\n  bar")
    vals = [f.value for f in forms]
    assert vals == [42, 3.5, True, False, Symbol("foo"), Symbol("bar")]
    assert forms[0].pos == (1, 1)
    assert forms[5].pos == (2, 3)


def test_nested_lists_and_brackets():
    (form,) = read_all("(let ([x 1]) x)")
    assert isinstance(form, SList)
    assert to_datum(form) == [Symbol("let"), [[Symbol("x"), 1]], Symbol("x")]


def test_quote_sugar():
    (form,) = read_all("'((0.95 0.94) (0.29 0.001))")
    assert to_datum(form) == [Symbol("quote"), [[0.95, 0.94], [0.29, 0.001]]]


def test_comments_ignored():
    forms = read_all("; a comment\n(+ 1 2) ; trailing\n")
    assert len(forms) == 1


def test_unbalanced_open_is_syntax_error():
    with pytest.raises(DslSyntaxError) as exc:
        read_all("(static")
    assert exc.value.span == (1, 1)


def test_unbalanced_close():
    with pytest.raises(DslSyntaxError):
        read_all("(+ 1 2))")


def test_mismatched_bracket():
    with pytest.raises(DslSyntaxError):
        read_all("(+ 1 2]")


def test_negative_and_scientific_numbers():
    forms = read_all("-3 +4 1e-5 -0.5")
    assert [f.value for f in forms] == [-3, 4, 1e-5, -0.5]


def test_string_literals_rejected():
    with pytest.raises(DslSyntaxError):
        read_all('(print "hello")')
