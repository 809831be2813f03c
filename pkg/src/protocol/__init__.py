"""
    Protocol Module
    contains the declarative training protocol, its validation, presets and completeness audit
"""
