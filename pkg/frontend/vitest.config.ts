import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    globalSetup: ["./test/setup.ts"],
    testTimeout: 30_000,
    hookTimeout: 180_000,
    // all test files talk to the one shared service process
    fileParallelism: false,
  },
});
