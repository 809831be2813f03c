"""
    Data Module
    contains dataset ingestion, synthetic generation, windowing and LOSO fold construction
"""
