# Empty file to make data_collection a package 