"""
    Experiments Module
    contains the one-factor sweep runner, the procedure comparison study and curve plotting
"""
