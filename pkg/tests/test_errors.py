"""Exception hierarchy sanity checks."""

import pytest

from cellsearch import errors


def test_all_errors_share_one_base():
    for name in ("ConfigError", "ShapeError", "InvalidOperationError",
                 "NumericError", "ContractError", "GenotypeParseError",
                 "GenotypeVersionError", "DataValidationError",
                 "DivergenceError"):
        cls = getattr(errors, name)
        assert issubclass(cls, errors.CellSearchError)
        assert issubclass(cls, Exception)


def test_divergence_error_carries_location():
    exc = errors.DivergenceError("boom", epoch=4, batch_index=2)
    assert exc.epoch == 4
    assert exc.batch_index == 2
    assert "boom" in str(exc)
    with pytest.raises(errors.CellSearchError):
        raise exc
