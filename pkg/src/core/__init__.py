"""
    Core Application Module
    contains the harbench management commands and their tests
"""
