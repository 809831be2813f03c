"""
    Architectures Module
    contains the three reference networks, their loss/gradient contract and checkpoint files
"""
