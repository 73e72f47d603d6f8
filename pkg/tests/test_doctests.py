import doctest
import importlib

import pytest

MODULES = ["czreg.boyd", "czreg.signals", "czreg.lp_approx", "czreg.jet_extract", "czreg.oscillation",
           "czreg.whitney", "czreg.estimators", "czreg.experiments", "czreg.cli"]


@pytest.mark.parametrize("name", MODULES)
def test_docstring_examples(name):
    result = doctest.testmod(importlib.import_module(name), optionflags=doctest.ELLIPSIS)
    assert result.failed == 0
