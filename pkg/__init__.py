# triad_da package
