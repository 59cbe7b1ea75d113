import gilevel


def test_version():
    assert hasattr(gilevel, "__version__") and "." in gilevel.__version__
