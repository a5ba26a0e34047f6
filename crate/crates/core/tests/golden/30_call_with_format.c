printf("%d\n", v1 + 1);
