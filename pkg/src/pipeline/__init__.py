# Empty file to make pipeline a package 