x = a - b - c;
