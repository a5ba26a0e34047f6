n = sizeof v;
