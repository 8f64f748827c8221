"""
Integration tests: whole programs, property sweeps and the command line.
"""
