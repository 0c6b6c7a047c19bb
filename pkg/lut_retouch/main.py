# lut_retouch/main.py

from .cli import main as run_cli_main


def entry_point():
    """
    Console-script entry point declared in `pyproject.toml`.

    `cli.main` parses arguments, runs the subcommand and exits with its
    status code, so this only delegates.
    """
    run_cli_main()


if __name__ == "__main__":
    entry_point()
