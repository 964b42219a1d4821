import { ApiClient } from "./api.js";
import { mountChat } from "./ui.js";

const root = document.getElementById("chat");
if (root) {
  mountChat(root, new ApiClient(""));
}
