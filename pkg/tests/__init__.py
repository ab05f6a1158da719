# Test initialization
