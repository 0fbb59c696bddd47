# Initialize the tests package 