"""
    Engine Module
    contains the training loop and its optimizer, scheduler, early stopping and model selection state machines
"""
