"""aghmn test suite"""
