"""Independent oracles for expected values frozen in tests/fixtures/.

Nothing here imports the package under test.  Regenerate the fixtures with

    python tests/oracles/regenerate.py
"""
