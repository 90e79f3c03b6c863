from hgbic import __version__


def test_version():
    assert __version__ == "1.0.0"


def test_cli_import():
    # Test that CLI can be imported
    from hgbic.cli import cli

    assert cli is not None
    assert set(cli.commands) == {"fit", "select", "simulate", "sweep-zeta", "check-contrast"}
