# Empty file to make visualization a package
