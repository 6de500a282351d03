# Make directories importable
