"""
    Evaluation Module
    contains macro F1, LOSO orchestration across folds and seeds, and result tables
"""
