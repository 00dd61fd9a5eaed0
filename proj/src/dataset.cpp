namespace lsrf {}
