a[i] = b[i + 1];
