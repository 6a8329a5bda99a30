"""Entry point for running homog-cli as a module."""

from homog_cli.cli import app

if __name__ == "__main__":
    app()
