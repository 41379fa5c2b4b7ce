import hypothesis

# Property tests run numerical code whose per-example cost varies widely
# between machines; wall-clock deadlines would only add flakes.
hypothesis.settings.register_profile(
    "kerndep",
    deadline=None,
    max_examples=50,
    print_blob=True,
)
hypothesis.settings.load_profile("kerndep")
