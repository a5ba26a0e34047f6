std::ostream::operator<<(&std::cout, v1);
